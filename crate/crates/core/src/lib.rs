//! Moving-target traveling salesman with obstacles.
//!
//! An agent leaves a depot, intercepts each moving target inside one of its
//! time windows while avoiding grid obstacles, and returns; the final time is
//! minimized to within a factor `w` of optimal.

// `!(a <= b)` is used on purpose so NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fmcstar;
pub mod generate;
pub mod geometry;
pub mod kinematics;
pub mod trajopt;
pub mod twgraph;
pub mod gtsptw;
pub mod instance;
pub mod oracle;
pub mod orchestrator;
pub mod solution_file;
pub mod world;
