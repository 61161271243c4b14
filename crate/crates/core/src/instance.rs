//! Problem instances and their versioned JSON file format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{intervals_cover, Vec3};
use crate::kinematics::{Interval, KinematicsError, TargetTrajectory, TargetWindow, WindowId};
use crate::world::{decompose_free_space, window_clip, GridMap, WorldError};

pub const FORMAT_VERSION: u32 = 1;
pub const MAX_TARGETS: usize = 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub dims: [usize; 3],
    pub cell_size: f64,
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default)]
    pub blocked: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFile {
    /// `[t, x, y, z]` rows.
    pub waypoints: Vec<[f64; 4]>,
    /// `[t_lo, t_hi]`; `null` for an open-ended window.
    pub windows: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format_version: u32,
    pub grid: GridFile,
    pub depot: [f64; 3],
    pub v_max: f64,
    pub targets: Vec<TargetFile>,
}

impl InstanceFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance files always serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("unsupported format_version {0}")]
    UnsupportedVersion(u32),
    #[error("grid: {0}")]
    Grid(WorldError),
    #[error("v_max must be positive and finite, got {0}")]
    NonPositiveSpeed(f64),
    #[error("depot lies outside the free space")]
    DepotOutsideFreeSpace,
    #[error("{0} targets exceed the supported maximum of 63")]
    TooManyTargets(usize),
    #[error("target {target} has no time windows")]
    NoWindows { target: usize },
    #[error("target {target} waypoints: {reason}")]
    BadWaypoints { target: usize, reason: KinematicsError },
    #[error("target {target} window {window} is invalid: [{lo}, {hi}]")]
    InvalidWindow { target: usize, window: usize, lo: f64, hi: f64 },
    #[error("target {target} changes velocity inside window {window}")]
    NonConstantVelocity { target: usize, window: usize },
    #[error("target {target} moves at {speed} > v_max = {v_max} in window {window}")]
    TooFast { target: usize, window: usize, speed: f64, v_max: f64 },
    #[error("target {target} leaves the free space during window {window}")]
    OutsideFreeSpace { target: usize, window: usize },
    #[error("target {target} window {window} is open-ended but the target keeps moving")]
    UnboundedMovingWindow { target: usize, window: usize },
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid instance: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ValidationError>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub trajectory: TargetTrajectory,
    pub windows: Vec<Interval>,
}

/// A validated-on-load problem instance. Target ids start at 1; 0 is the depot.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub grid: GridMap,
    pub depot: Vec3,
    pub v_max: f64,
    pub targets: Vec<Target>,
}

impl Instance {
    /// Depot window first, then every target's windows in order; `windows[k].id == WindowId(k)`.
    pub fn target_windows(&self) -> Result<Vec<TargetWindow>, ValidationError> {
        let mut out = vec![TargetWindow::depot(self.depot)];
        for (i, target) in self.targets.iter().enumerate() {
            for (slot, window) in target.windows.iter().enumerate() {
                let id = WindowId(out.len());
                let tw = TargetWindow::from_trajectory(id, i + 1, slot, &target.trajectory, *window).map_err(|_| {
                    ValidationError::NonConstantVelocity { target: i + 1, window: slot }
                })?;
                out.push(tw);
            }
        }
        Ok(out)
    }

    /// Every violated modeling assumption.
    pub fn validate(&self) -> Vec<ValidationError> {
        let mut errors = Vec::new();
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            errors.push(ValidationError::NonPositiveSpeed(self.v_max));
        }
        if self.targets.len() > MAX_TARGETS {
            errors.push(ValidationError::TooManyTargets(self.targets.len()));
        }
        let boxes = decompose_free_space(&self.grid);
        if !boxes.iter().any(|b| b.contains(&self.depot, 1e-9)) {
            errors.push(ValidationError::DepotOutsideFreeSpace);
        }
        for (i, target) in self.targets.iter().enumerate() {
            let id = i + 1;
            if target.windows.is_empty() {
                errors.push(ValidationError::NoWindows { target: id });
            }
            for (slot, window) in target.windows.iter().enumerate() {
                let Ok(tw) = TargetWindow::from_trajectory(WindowId(0), id, slot, &target.trajectory, *window) else {
                    errors.push(ValidationError::NonConstantVelocity { target: id, window: slot });
                    continue;
                };
                if !window.is_bounded() && tw.speed() > 0.0 {
                    errors.push(ValidationError::UnboundedMovingWindow { target: id, window: slot });
                }
                if tw.speed() > self.v_max * (1.0 + 1e-9) {
                    errors.push(ValidationError::TooFast { target: id, window: slot, speed: tw.speed(), v_max: self.v_max });
                }
                let span = if tw.speed() == 0.0 { 0.0 } else { window.hi_arith() - window.lo };
                let parts = boxes.iter().filter_map(|b| window_clip(b, &tw)).collect();
                if !intervals_cover(parts, 0.0, span, 1e-9) {
                    errors.push(ValidationError::OutsideFreeSpace { target: id, window: slot });
                }
            }
        }
        errors
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self, InstanceError> {
        let invalid = |e: ValidationError| InstanceError::Invalid(vec![e]);
        if file.format_version != FORMAT_VERSION {
            return Err(invalid(ValidationError::UnsupportedVersion(file.format_version)));
        }
        let g = &file.grid;
        let grid =
            GridMap::new(g.dims, g.cell_size, Vec3::from(g.origin), &g.blocked).map_err(|e| invalid(ValidationError::Grid(e)))?;
        let mut targets = Vec::new();
        let mut errors = Vec::new();
        for (i, t) in file.targets.iter().enumerate() {
            let wp = t.waypoints.iter().map(|r| (r[0], Vec3::new(r[1], r[2], r[3]))).collect();
            let trajectory = match TargetTrajectory::new(wp) {
                Ok(tr) => tr,
                Err(reason) => {
                    errors.push(ValidationError::BadWaypoints { target: i + 1, reason });
                    continue;
                }
            };
            let mut windows = Vec::new();
            for (slot, &(lo, hi)) in t.windows.iter().enumerate() {
                let hi = hi.unwrap_or(f64::INFINITY);
                match Interval::new(lo, hi) {
                    Ok(w) => windows.push(w),
                    Err(_) => errors.push(ValidationError::InvalidWindow { target: i + 1, window: slot, lo, hi }),
                }
            }
            targets.push(Target { trajectory, windows });
        }
        if !errors.is_empty() {
            return Err(InstanceError::Invalid(errors));
        }
        let instance = Self { grid, depot: Vec3::from(file.depot), v_max: file.v_max, targets };
        let errors = instance.validate();
        if errors.is_empty() {
            Ok(instance)
        } else {
            Err(InstanceError::Invalid(errors))
        }
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            format_version: FORMAT_VERSION,
            grid: GridFile {
                dims: self.grid.dims,
                cell_size: self.grid.cell_size,
                origin: self.grid.origin.into(),
                blocked: self.grid.blocked_cells(),
            },
            depot: self.depot.into(),
            v_max: self.v_max,
            targets: self
                .targets
                .iter()
                .map(|t| TargetFile {
                    waypoints: t.trajectory.waypoints().iter().map(|(s, p)| [*s, p.x, p.y, p.z]).collect(),
                    windows: t.windows.iter().map(|w| (w.lo, w.hi.is_finite().then_some(w.hi))).collect(),
                })
                .collect(),
        }
    }
}

pub fn parse_instance_str(text: &str) -> Result<Instance, InstanceError> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| InstanceError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Instance::from_file(&file)
}

pub fn parse_instance(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| InstanceError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_instance_str(&text)
}
