//! Target motion, target-windows, and the obstacle-unaware interception bounds.
//!
//! Within a window every target moves on a straight line at constant velocity
//! no faster than the agent. Under that assumption two facts make the bounds
//! cheap:
//!
//! * for a fixed departure `(p0, t0)` the slack `v_max·(t − t0) − ‖q(t) − p0‖`
//!   is nondecreasing in `t`, so the feasible arrival times form a ray and the
//!   earliest one is a root of a quadratic;
//! * departing later never helps, so a departure is feasible iff the agent can
//!   still make the target at the very end of its window.
//!
//! The shortest travel time minimizes `t − t0` over a convex feasible set in
//! `(t0, t)`; its feasible values form an interval and are found by bisection
//! on a closed-form feasibility test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Upper bound used in place of `+∞` whenever a window end enters arithmetic.
pub const UNBOUNDED_HORIZON: f64 = 1e9;

/// Target identifier; `0` is the depot.
pub type TargetId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("departure time {t0} lies outside the window [{lo}, {hi}]")]
    DomainError { t0: f64, lo: f64, hi: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("trajectory has no waypoints")]
    EmptyTrajectory,
    #[error("waypoint times must be strictly increasing")]
    NonIncreasingTimes,
    #[error("velocity is not constant over [{lo}, {hi}]")]
    NonConstantVelocity { lo: f64, hi: f64 },
}

/// Closed time interval; `hi` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, KinematicsError> {
        if !lo.is_finite() || hi.is_nan() || hi < lo {
            return Err(KinematicsError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn is_bounded(&self) -> bool {
        self.hi.is_finite()
    }

    /// `hi` with `+∞` replaced by [`UNBOUNDED_HORIZON`].
    pub fn hi_arith(&self) -> f64 {
        self.hi.min(UNBOUNDED_HORIZON)
    }

    pub fn contains(&self, t: f64, tol: f64) -> bool {
        t >= self.lo - tol && t <= self.hi + tol
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Piecewise-linear target motion, held constant outside the waypoint span.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrajectory {
    waypoints: Vec<(f64, Vec3)>,
}

impl TargetTrajectory {
    pub fn new(waypoints: Vec<(f64, Vec3)>) -> Result<Self, KinematicsError> {
        if waypoints.is_empty() {
            return Err(KinematicsError::EmptyTrajectory);
        }
        if waypoints.windows(2).any(|w| !(w[1].0 > w[0].0)) || waypoints.iter().any(|w| !w.0.is_finite()) {
            return Err(KinematicsError::NonIncreasingTimes);
        }
        Ok(Self { waypoints })
    }

    pub fn stationary(p: Vec3) -> Self {
        Self { waypoints: vec![(0.0, p)] }
    }

    pub fn waypoints(&self) -> &[(f64, Vec3)] {
        &self.waypoints
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let w = &self.waypoints;
        if t <= w[0].0 {
            return w[0].1;
        }
        let last = w[w.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let k = w.partition_point(|(tk, _)| *tk <= t);
        let (t0, p0) = w[k - 1];
        let (t1, p1) = w[k];
        p0 + (p1 - p0) * ((t - t0) / (t1 - t0))
    }

    /// The single velocity the target holds over `window`, or an error if the
    /// motion bends inside it.
    pub fn velocity_over(&self, window: Interval) -> Result<Vec3, KinematicsError> {
        let start = self.position(window.lo);
        let bent = KinematicsError::NonConstantVelocity { lo: window.lo, hi: window.hi };
        if !window.is_bounded() {
            let moves = self
                .waypoints
                .iter()
                .any(|(t, p)| *t > window.lo && (p - start).norm() > 1e-9 * (1.0 + start.norm()));
            return if moves { Err(bent) } else { Ok(Vec3::zeros()) };
        }
        let len = window.length();
        if len <= 0.0 {
            return Ok(Vec3::zeros());
        }
        let vel = (self.position(window.hi) - start) / len;
        let scale = 1e-9 * (1.0 + start.norm() + vel.norm() * len);
        for (t, p) in &self.waypoints {
            if *t > window.lo && *t < window.hi && (start + vel * (t - window.lo) - p).norm() > scale {
                return Err(bent);
            }
        }
        Ok(vel)
    }
}

/// Index of a target-window in a window table; `WindowId(0)` is the depot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowId(pub usize);

/// A target paired with one of its time windows, together with the
/// constant-velocity motion the target follows inside that window.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetWindow {
    pub id: WindowId,
    pub target: TargetId,
    /// Position of the window among its target's windows.
    pub slot: usize,
    pub window: Interval,
    /// Target position at `window.lo`.
    pub start: Vec3,
    pub velocity: Vec3,
}

impl TargetWindow {
    /// The depot window `(0, [0, ∞))`, stationary at `p`.
    pub fn depot(p: Vec3) -> Self {
        Self {
            id: WindowId(0),
            target: 0,
            slot: 0,
            window: Interval { lo: 0.0, hi: f64::INFINITY },
            start: p,
            velocity: Vec3::zeros(),
        }
    }

    pub fn from_trajectory(
        id: WindowId,
        target: TargetId,
        slot: usize,
        trajectory: &TargetTrajectory,
        window: Interval,
    ) -> Result<Self, KinematicsError> {
        let velocity = trajectory.velocity_over(window)?;
        Ok(Self { id, target, slot, window, start: trajectory.position(window.lo), velocity })
    }

    pub fn is_depot(&self) -> bool {
        self.target == 0
    }

    /// Position on the window's line; extends linearly beyond the window.
    pub fn position(&self, t: f64) -> Vec3 {
        self.start + self.velocity * (t - self.window.lo)
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

fn time_tol(scale: f64) -> f64 {
    1e-12 * (1.0 + scale.abs())
}

/// Feasible `s ≥ 0` with `‖r + b·s‖ ≤ v_max·s`, as a closed range (upper end may be `+∞`).
pub(crate) fn reach_interval(r: &Vec3, b: &Vec3, v_max: f64) -> Option<(f64, f64)> {
    let a = b.norm_squared() - v_max * v_max;
    let bb = 2.0 * r.dot(b);
    let c = r.norm_squared();
    let tol_a = 1e-12 * v_max * v_max;
    if c == 0.0 {
        return if a <= tol_a { Some((0.0, f64::INFINITY)) } else { Some((0.0, (-bb / a).max(0.0))) };
    }
    if a < -tol_a {
        // Roots straddle zero; the positive one opens a ray of feasibility.
        let disc = (bb * bb - 4.0 * a * c).max(0.0);
        let sq = disc.sqrt();
        let s = if bb >= 0.0 { (bb + sq) / (-2.0 * a) } else { 2.0 * c / (sq - bb) };
        return Some((s.max(0.0), f64::INFINITY));
    }
    if a <= tol_a {
        return (bb < 0.0).then(|| (-c / bb, f64::INFINITY));
    }
    // Target faster than the agent: feasibility is a bounded interval, if any.
    let mut disc = bb * bb - 4.0 * a * c;
    if disc < 0.0 {
        if disc < -1e-12 * bb * bb {
            return None;
        }
        disc = 0.0;
    }
    let q = -0.5 * (bb + bb.signum() * disc.sqrt());
    let (mut s1, mut s2) = (q / a, c / q);
    if s1 > s2 {
        std::mem::swap(&mut s1, &mut s2);
    }
    (s2 >= 0.0).then(|| (s1.max(0.0), s2))
}

/// Earliest `t ∈ span`, `t ≥ t0`, at which an agent leaving `p0` at `t0`
/// meets a target on the line of `target`. `None` if there is none.
pub fn earliest_intercept(p0: &Vec3, t0: f64, target: &TargetWindow, span: Interval, v_max: f64) -> Option<f64> {
    let start = t0.max(span.lo);
    let end = span.hi_arith();
    let tol = time_tol(end);
    if start > end + tol {
        return None;
    }
    let r = target.position(t0) - p0;
    let (s_lo, s_hi) = reach_interval(&r, &target.velocity, v_max)?;
    let lo = start.max(t0 + s_lo);
    let hi = end.min(t0 + s_hi);
    (lo <= hi + tol).then(|| lo.min(end))
}

/// Obstacle-unaware earliest feasible arrival at `v` after leaving `u` at `t0`;
/// `+∞` if `v`'s window closes first.
pub fn earliest_arrival(u: &TargetWindow, v: &TargetWindow, t0: f64, v_max: f64) -> Result<f64, KinematicsError> {
    if !u.window.contains(t0, time_tol(t0)) {
        return Err(KinematicsError::DomainError { t0, lo: u.window.lo, hi: u.window.hi });
    }
    let p0 = u.position(t0);
    Ok(earliest_intercept(&p0, t0, v, v.window, v_max).unwrap_or(f64::INFINITY))
}

/// Obstacle-unaware latest departure from `u` that still reaches `v` in its
/// window; `−∞` if no departure works.
pub fn latest_departure(u: &TargetWindow, v: &TargetWindow, v_max: f64) -> f64 {
    if !v.window.is_bounded() && v.speed() < v_max {
        // An open-ended window is always caught eventually.
        return u.window.hi;
    }
    let tv = v.window.hi_arith();
    let top = u.window.hi_arith().min(tv);
    let tol = time_tol(tv);
    if top < u.window.lo - tol {
        return f64::NEG_INFINITY;
    }
    // Departing at t0 = tv − σ is feasible iff ‖r + b·σ‖ ≤ v_max·σ.
    let r = v.position(tv) - u.position(tv);
    let Some((s_lo, s_hi)) = reach_interval(&r, &u.velocity, v_max) else {
        return f64::NEG_INFINITY;
    };
    let lo = s_lo.max(tv - top);
    let hi = s_hi.min(tv - u.window.lo);
    if lo > hi + tol {
        return f64::NEG_INFINITY;
    }
    (tv - lo).clamp(u.window.lo, top)
}

/// Obstacle-unaware shortest travel time from `u` to `v` over all departures.
pub fn shortest_travel(u: &TargetWindow, v: &TargetWindow, v_max: f64) -> f64 {
    let e0 = earliest_arrival(u, v, u.window.lo, v_max).unwrap_or(f64::INFINITY);
    if !e0.is_finite() {
        return f64::INFINITY;
    }
    let upper = e0 - u.window.lo;
    let feasible = |delta: f64| {
        let lo = u.window.lo.max(v.window.lo - delta);
        let hi = u.window.hi_arith().min(v.window.hi_arith() - delta);
        if lo > hi + time_tol(hi) {
            return false;
        }
        // Separation at departure lo + τ is c0 + k·τ; take its closest approach.
        let c0 = v.position(lo + delta) - u.position(lo);
        let k = v.velocity - u.velocity;
        let kk = k.norm_squared();
        let tau = if kk > 0.0 { (-c0.dot(&k) / kk).clamp(0.0, (hi - lo).max(0.0)) } else { 0.0 };
        (c0 + k * tau).norm() <= v_max * delta + 1e-12 * (1.0 + c0.norm())
    };
    if feasible(0.0) {
        return 0.0;
    }
    // The feasible durations form an interval containing `upper`.
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..200 {
        if hi - lo <= 1e-13 * (1.0 + upper) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
