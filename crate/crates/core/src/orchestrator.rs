//! Alternates the high-level tour search with the low-level trajectory search
//! until the incumbent is within `w` of the best lower bound.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmcstar::{Budget, DictEvent, Fmc, FmcCallRecord, LowLevelState, PopEvent, PruneDict};
use crate::geometry::{segment_covered, Vec3};
use crate::gtsptw::{ForbiddenSet, HighLevelSearch};
use crate::instance::{Instance, ValidationError};
use crate::kinematics::{TargetWindow, WindowId};
use crate::trajopt::{Trajectory, TrajectoryDefect};
use crate::twgraph::TargetWindowGraph;
use crate::world::{build_gcs, decompose_free_space, WorldError};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Suboptimality factor, at least 1.
    pub w: f64,
    pub max_expansions: Option<u64>,
    pub time_limit: Option<Duration>,
    /// Record every focal pop.
    pub trace: bool,
    /// Record every prune-dictionary access.
    pub audit: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { w: 1.0, max_expansions: None, time_limit: None, trace: false, audit: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    /// The incumbent is within `w` of optimal.
    Solved,
    /// No tour admits a collision-free trajectory.
    Infeasible,
    /// A budget ran out first; any incumbent is unproven.
    Unproven,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub tours_emitted: usize,
    pub fmc_calls: usize,
    pub paths_expanded: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    /// Depot, one window per target, depot; empty without an incumbent.
    pub tour: Vec<WindowId>,
    /// Interception time for each entry of `tour`.
    pub intercepts: Vec<f64>,
    pub trajectory: Trajectory,
    pub t_f: f64,
    pub lb_at_termination: f64,
    pub w: f64,
    pub stats: SolveStats,
}

/// A solution plus everything recorded on the way.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Solution,
    pub windows: Vec<TargetWindow>,
    pub calls: Vec<FmcCallRecord>,
    pub dict_audit: Vec<DictEvent>,
    pub trace: Vec<PopEvent>,
    /// `t_f` after each incumbent improvement.
    pub incumbents: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("suboptimality factor must be finite and at least 1, got {0}")]
    InvalidFactor(f64),
    #[error("invalid instance: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Instance(Vec<ValidationError>),
    #[error(transparent)]
    World(#[from] WorldError),
}

pub fn solve(instance: &Instance, opts: &SolveOptions) -> Result<Solution, SolveError> {
    solve_with_report(instance, opts).map(|r| r.solution)
}

pub fn solve_with_report(instance: &Instance, opts: &SolveOptions) -> Result<SolveReport, SolveError> {
    let started = Instant::now();
    if !(opts.w >= 1.0 && opts.w.is_finite()) {
        return Err(SolveError::InvalidFactor(opts.w));
    }
    let errors = instance.validate();
    if !errors.is_empty() {
        return Err(SolveError::Instance(errors));
    }
    let windows = instance.target_windows().map_err(|e| SolveError::Instance(vec![e]))?;
    if instance.targets.is_empty() {
        let solution = Solution {
            status: SolveStatus::Solved,
            tour: vec![WindowId(0); 2],
            intercepts: vec![0.0; 2],
            trajectory: Trajectory::default(),
            t_f: 0.0,
            lb_at_termination: 0.0,
            w: opts.w,
            stats: SolveStats { wall_ms: started.elapsed().as_secs_f64() * 1e3, ..SolveStats::default() },
        };
        let empty = SolveReport { solution, windows, calls: vec![], dict_audit: vec![], trace: vec![], incumbents: vec![] };
        return Ok(empty);
    }
    let regions = decompose_free_space(&instance.grid);
    let gcs = build_gcs(&regions, &windows)?;
    let graph = TargetWindowGraph::build(&windows, instance.v_max);

    let mut high = HighLevelSearch::new(&graph, ForbiddenSet::default());
    let mut low = LowLevelState::new(if opts.audit { PruneDict::with_audit() } else { PruneDict::new() });
    let fmc = Fmc { gcs: &gcs, v_max: instance.v_max, w: opts.w, trace: opts.trace };
    let mut budget =
        Budget { max_expansions: opts.max_expansions, deadline: opts.time_limit.map(|d| started + d), expansions: 0 };
    let mut incumbents = Vec::new();
    let mut budget_hit = false;

    let converged = |low: &LowLevelState, lb_h: f64| {
        low.incumbent.as_ref().is_some_and(|inc| inc.t_f <= opts.w * lb_h.min(low.lb_l) * (1.0 + 1e-12))
    };
    let lb_h = loop {
        let lb_h = high.lower_bound();
        if converged(&low, lb_h) {
            break lb_h;
        }
        if budget.exhausted() {
            budget_hit = true;
            break lb_h;
        }
        let Some(tour) = high.next_tour() else {
            break f64::INFINITY;
        };
        let report = low.low_level_search(&fmc, &tour.windows, &mut budget);
        for prefix in &report.forbid {
            high.add_forbidden(prefix);
        }
        if report.improved {
            incumbents.push(low.incumbent.as_ref().map_or(f64::INFINITY, |i| i.t_f));
        }
        if report.budget_hit {
            // The interrupted tour has left the frontier but is still open.
            budget_hit = true;
            break high.lower_bound().min(tour.lb);
        }
    };

    let lb = lb_h.min(low.lb_l);
    let stats = SolveStats {
        tours_emitted: high.tours_emitted,
        fmc_calls: low.calls.len(),
        paths_expanded: low.paths_expanded,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    let dict_audit = low.dict.audit_log();
    let solution = match low.incumbent.take() {
        Some(inc) => Solution {
            status: if budget_hit { SolveStatus::Unproven } else { SolveStatus::Solved },
            tour: inc.tour,
            intercepts: inc.intercepts,
            trajectory: inc.trajectory,
            t_f: inc.t_f,
            lb_at_termination: lb,
            w: opts.w,
            stats,
        },
        None => Solution {
            status: if budget_hit { SolveStatus::Unproven } else { SolveStatus::Infeasible },
            tour: Vec::new(),
            intercepts: Vec::new(),
            trajectory: Trajectory::default(),
            t_f: f64::INFINITY,
            lb_at_termination: lb,
            w: opts.w,
            stats,
        },
    };
    Ok(SolveReport { solution, windows, calls: low.calls, dict_audit, trace: low.trace, incumbents })
}

const POS_TOL: f64 = 1e-6;
const TIME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("status is {0:?}, not solved")]
    NotSolved(SolveStatus),
    #[error("trajectory: {0:?}")]
    Trajectory(TrajectoryDefect),
    #[error("segment {0} leaves the free space")]
    Collision(usize),
    #[error("trajectory does not start at the depot at time 0")]
    BadStart,
    #[error("trajectory does not end at the depot at t_f")]
    BadEnd,
    #[error("tour is malformed: {0}")]
    Tour(String),
    #[error("interception {index} at t={time} is outside the target's window")]
    OutsideWindow { index: usize, time: f64 },
    #[error("interception {index} at t={time} misses the target by {gap}")]
    Missed { index: usize, time: f64, gap: f64 },
    #[error("interception times decrease at {0}")]
    OutOfOrder(usize),
}

/// Independent feasibility check of a reported solution against its instance.
/// Returns every violation found; an empty list means the solution is valid.
pub fn validate_solution(solution: &Solution, instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    if solution.status != SolveStatus::Solved {
        out.push(Violation::NotSolved(solution.status));
        return out;
    }
    let windows = match instance.target_windows() {
        Ok(w) => w,
        Err(e) => {
            out.push(Violation::Tour(e.to_string()));
            return out;
        }
    };
    let traj = &solution.trajectory;
    out.extend(traj.defects(instance.v_max).into_iter().map(Violation::Trajectory));

    let boxes = decompose_free_space(&instance.grid);
    for (k, s) in traj.segments.iter().enumerate() {
        if !segment_covered(&boxes, &s.p_start, &s.p_end, 1e-9) {
            out.push(Violation::Collision(k));
        }
    }

    let depot = instance.depot;
    let near = |p: Option<Vec3>| p.is_some_and(|p| (p - depot).norm() <= POS_TOL);
    let (start, end) = match (traj.segments.first(), traj.segments.last()) {
        (Some(a), Some(b)) => ((a.t_start, Some(a.p_start)), (b.t_end, Some(b.p_end))),
        _ => ((0.0, Some(depot)), (0.0, Some(depot))),
    };
    if start.0.abs() > TIME_TOL || !near(start.1) {
        out.push(Violation::BadStart);
    }
    if (end.0 - solution.t_f).abs() > TIME_TOL || !near(end.1) {
        out.push(Violation::BadEnd);
    }

    let tour = &solution.tour;
    let m = instance.targets.len();
    if tour.len() != m + 2 {
        out.push(Violation::Tour(format!("expected {} entries, got {}", m + 2, tour.len())));
        return out;
    }
    if tour[0] != WindowId(0) || tour[m + 1] != WindowId(0) {
        out.push(Violation::Tour("must start and end at the depot".into()));
    }
    let mut seen = vec![false; m + 1];
    for w in &tour[1..=m] {
        match windows.get(w.0) {
            Some(tw) if tw.target != 0 && !seen[tw.target] => seen[tw.target] = true,
            _ => out.push(Violation::Tour(format!("window {} is unknown or repeats a target", w.0))),
        }
    }
    if solution.intercepts.len() != tour.len() {
        out.push(Violation::Tour("one interception time per tour entry required".into()));
        return out;
    }
    if (solution.intercepts[m + 1] - solution.t_f).abs() > TIME_TOL {
        out.push(Violation::BadEnd);
    }
    let mut prev = f64::NEG_INFINITY;
    for (index, (w, &time)) in tour.iter().zip(&solution.intercepts).enumerate() {
        if time < prev - TIME_TOL {
            out.push(Violation::OutOfOrder(index));
        }
        prev = time;
        let Some(tw) = windows.get(w.0) else { continue };
        if !tw.window.contains(time, TIME_TOL) {
            out.push(Violation::OutsideWindow { index, time });
            continue;
        }
        let at = traj.position(time).unwrap_or(depot);
        let gap = (at - tw.position(time)).norm();
        if gap > POS_TOL {
            out.push(Violation::Missed { index, time, gap });
        }
    }
    out
}
