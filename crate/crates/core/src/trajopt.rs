//! Minimum-time piecewise-linear trajectories through a sequence of convex sets.
//!
//! The problem is a second-order cone program: junction positions and times
//! are the variables, each segment is confined to its set and obeys the speed
//! cone, and the final junction lands on the terminal target's line. Clarabel
//! solves it; the solution is then rebuilt exactly (every junction snapped into
//! its sets, box legs flown at full speed, interceptions taken in closed form),
//! so returned trajectories satisfy the constraints to rounding rather than to
//! solver tolerance. Common short set sequences skip the solver altogether.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use crate::kinematics::{earliest_intercept, Interval, TargetWindow};
use crate::world::{window_clip, window_meeting};

const DEADLINE_TOL: f64 = 1e-9;
const MEMBER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub p_start: Vec3,
    pub t_start: f64,
    pub p_end: Vec3,
    pub t_end: f64,
}

impl Segment {
    pub fn still(p: Vec3, t: f64) -> Self {
        Self { p_start: p, t_start: t, p_end: p, t_end: t }
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn length(&self) -> f64 {
        (self.p_end - self.p_start).norm()
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let d = self.duration();
        if d <= 0.0 {
            return self.p_end;
        }
        let a = ((t - self.t_start) / d).clamp(0.0, 1.0);
        self.p_start + (self.p_end - self.p_start) * a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryDefect {
    Gap { index: usize },
    TimeReversed { index: usize },
    TooFast { index: usize, speed: f64 },
}

/// Agent motion as contiguous straight segments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
}

impl Trajectory {
    pub fn start_time(&self) -> Option<f64> {
        self.segments.first().map(|s| s.t_start)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.segments.last().map(|s| s.t_end)
    }

    /// Position at `t`, held constant outside the covered span.
    pub fn position(&self, t: f64) -> Option<Vec3> {
        let first = self.segments.first()?;
        if t <= first.t_start {
            return Some(first.p_start);
        }
        let k = self.segments.partition_point(|s| s.t_end < t);
        Some(self.segments.get(k).unwrap_or(self.segments.last()?).position(t))
    }

    /// Contiguity, time order and speed checks.
    pub fn defects(&self, v_max: f64) -> Vec<TrajectoryDefect> {
        let mut out = Vec::new();
        for (k, s) in self.segments.iter().enumerate() {
            if s.t_end < s.t_start {
                out.push(TrajectoryDefect::TimeReversed { index: k });
            }
            let allowed = v_max * s.duration().max(0.0) * (1.0 + 1e-9) + 1e-12;
            if s.length() > allowed {
                let speed = if s.duration() > 0.0 { s.length() / s.duration() } else { f64::INFINITY };
                out.push(TrajectoryDefect::TooFast { index: k, speed });
            }
            if let Some(next) = self.segments.get(k + 1) {
                if (next.p_start - s.p_end).norm() > 1e-9 || (next.t_start - s.t_end).abs() > 1e-9 {
                    out.push(TrajectoryDefect::Gap { index: k });
                }
            }
        }
        out
    }
}

/// One set of an auxiliary path.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxSet {
    Region(Aabb),
    Window(TargetWindow),
    /// All of space and time; only as the final entry.
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxPath {
    pub sets: Vec<AuxSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajOptSolution {
    pub t_final: f64,
    /// End time of the last constrained segment.
    pub g: f64,
    /// One segment per set, the last one obstacle-unaware.
    pub trajectory: Trajectory,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum Infeasible {
    #[error("the terminal target cannot be intercepted through these sets")]
    Unreachable,
    #[error("the optimal final time exceeds the deadline")]
    Deadline,
}

/// Times during which `w` lies in `region`.
pub fn time_span_in(region: &Aabb, w: &TargetWindow) -> Option<Interval> {
    let (a, b) = window_clip(region, w)?;
    if w.speed() == 0.0 {
        return Some(w.window);
    }
    Some(Interval { lo: w.window.lo + a, hi: w.window.lo + b })
}

/// Minimum final time over `aux` from `start`, ending on `terminal`.
pub fn min_time_over_path(
    aux: &AuxPath,
    start: (Vec3, f64),
    terminal: &TargetWindow,
    v_max: f64,
    deadline: f64,
) -> Result<TrajOptSolution, Infeasible> {
    let sets = &aux.sets;
    assert!(sets.len() >= 2 && sets.last() == Some(&AuxSet::Free), "aux path must end with the free set");
    let (p0, t0) = start;
    let direct = earliest_intercept(&p0, t0, terminal, terminal.window, v_max).ok_or(Infeasible::Unreachable)?;
    if direct > deadline + DEADLINE_TOL {
        return Err(Infeasible::Deadline);
    }
    let core = &sets[..sets.len() - 1];
    let solution = match fast_path(core, start, terminal, v_max, direct) {
        Some(found) => found?,
        None => optimize(sets, start, terminal, v_max)?,
    };
    if solution.t_final > deadline + DEADLINE_TOL {
        return Err(Infeasible::Deadline);
    }
    Ok(solution)
}

fn in_set(set: &AuxSet, p: &Vec3) -> bool {
    match set {
        AuxSet::Region(b) => b.contains(p, MEMBER_TOL),
        _ => false,
    }
}

fn finish(mut segments: Vec<Segment>, g: f64, t_final: f64) -> TrajOptSolution {
    segments.shrink_to_fit();
    TrajOptSolution { t_final, g, trajectory: Trajectory { segments } }
}

/// Closed forms for short set sequences. `None` means "not applicable".
fn fast_path(
    core: &[AuxSet],
    (p0, t0): (Vec3, f64),
    terminal: &TargetWindow,
    v_max: f64,
    direct: f64,
) -> Option<Result<TrajOptSolution, Infeasible>> {
    let hold = |n: usize| vec![Segment::still(p0, t0); n];
    let free_leg = |p: Vec3, t: f64, tf: f64| Segment { p_start: p, t_start: t, p_end: terminal.position(tf), t_end: tf };
    match core {
        // Already at the start of a box (or window) that reaches the terminal freely.
        [_] | [_, AuxSet::Region(_)] if core.len() == 1 || in_set(&core[1], &p0) => {
            let mut segs = hold(core.len());
            segs.push(free_leg(p0, t0, direct));
            Some(Ok(finish(segs, t0, direct)))
        }
        [AuxSet::Window(a), AuxSet::Window(b)] => {
            let mut rest = a.clone();
            rest.start = a.position(t0);
            rest.window.lo = t0;
            let Some(t) = window_meeting(&rest, b) else {
                return Some(Err(Infeasible::Unreachable));
            };
            let p = b.position(t);
            let segs =
                vec![Segment { p_start: p0, t_start: t0, p_end: p, t_end: t }, Segment::still(p, t), Segment::still(p, t)];
            Some(Ok(finish(segs, t, t)))
        }
        [_, AuxSet::Region(b), AuxSet::Window(wn)] if b.contains(&p0, MEMBER_TOL) => {
            let t = time_span_in(b, wn).and_then(|span| earliest_intercept(&p0, t0, wn, span, v_max));
            let Some(t) = t else {
                return Some(Err(Infeasible::Unreachable));
            };
            let p = wn.position(t);
            let segs = vec![
                Segment::still(p0, t0),
                Segment { p_start: p0, t_start: t0, p_end: p, t_end: t },
                Segment::still(p, t),
                Segment::still(p, t),
            ];
            Some(Ok(finish(segs, t, t)))
        }
        _ => None,
    }
}

/// Affine expression `c + Σ a_i x_i`.
#[derive(Clone, Default)]
struct Affine {
    terms: Vec<(usize, f64)>,
    c: f64,
}

impl Affine {
    fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), c }
    }

    fn var(i: usize) -> Self {
        Self { terms: vec![(i, 1.0)], c: 0.0 }
    }

    fn scale(mut self, k: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.1 *= k);
        self.c *= k;
        self
    }

    fn add(mut self, other: Affine) -> Self {
        for (i, a) in other.terms {
            match self.terms.iter_mut().find(|t| t.0 == i) {
                Some(t) => t.1 += a,
                None => self.terms.push((i, a)),
            }
        }
        self.c += other.c;
        self
    }

    fn sub(self, other: Affine) -> Self {
        self.add(other.scale(-1.0))
    }
}

#[derive(Default)]
struct ConeRows {
    zero: Vec<Affine>,
    nonneg: Vec<Affine>,
    soc: Vec<Vec<Affine>>,
}

impl ConeRows {
    fn eq(&mut self, e: Affine) {
        self.zero.push(e);
    }

    fn ge(&mut self, e: Affine) {
        self.nonneg.push(e);
    }
}

/// Coordinate `i` (3 = time) of junction `k`; junction 0 is the fixed start.
fn coord(k: usize, i: usize, p0: &Vec3, t0: f64) -> Affine {
    if k == 0 {
        Affine::constant(if i == 3 { t0 } else { p0[i] })
    } else {
        Affine::var(4 * (k - 1) + i)
    }
}

fn on_line(rows: &mut ConeRows, k: usize, w: &TargetWindow, p0: &Vec3, t0: f64) {
    let t = coord(k, 3, p0, t0);
    for i in 0..3 {
        let line = Affine::constant(w.start[i] - w.velocity[i] * w.window.lo).add(t.clone().scale(w.velocity[i]));
        rows.eq(coord(k, i, p0, t0).sub(line));
    }
    rows.ge(t.clone().sub(Affine::constant(w.window.lo)));
    if w.window.is_bounded() {
        rows.ge(Affine::constant(w.window.hi).sub(t));
    }
}

fn in_box(rows: &mut ConeRows, k: usize, b: &Aabb, p0: &Vec3, t0: f64) {
    for i in 0..3 {
        let x = coord(k, i, p0, t0);
        if b.hi[i] - b.lo[i] <= 1e-12 {
            rows.eq(x.sub(Affine::constant(b.lo[i])));
        } else {
            rows.ge(x.clone().sub(Affine::constant(b.lo[i])));
            rows.ge(Affine::constant(b.hi[i]).sub(x));
        }
    }
}

fn optimize(
    sets: &[AuxSet],
    start: (Vec3, f64),
    terminal: &TargetWindow,
    v_max: f64,
) -> Result<TrajOptSolution, Infeasible> {
    let (p0, t0) = start;
    let k_count = sets.len();
    let n = 4 * k_count;
    let mut rows = ConeRows::default();
    for k in 1..=k_count {
        let mut cone = vec![coord(k, 3, &p0, t0).sub(coord(k - 1, 3, &p0, t0)).scale(v_max)];
        cone.extend((0..3).map(|i| coord(k, i, &p0, t0).sub(coord(k - 1, i, &p0, t0))));
        rows.soc.push(cone);
        let ends = if k == 1 { vec![k] } else { vec![k - 1, k] };
        match &sets[k - 1] {
            AuxSet::Region(b) => ends.iter().for_each(|&j| in_box(&mut rows, j, b, &p0, t0)),
            AuxSet::Window(w) => ends.iter().for_each(|&j| on_line(&mut rows, j, w, &p0, t0)),
            AuxSet::Free => on_line(&mut rows, k, terminal, &p0, t0),
        }
    }

    let mut a_rows = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if !rows.zero.is_empty() {
        cones.push(ZeroConeT(rows.zero.len()));
    }
    if !rows.nonneg.is_empty() {
        cones.push(NonnegativeConeT(rows.nonneg.len()));
    }
    a_rows.extend(rows.zero);
    a_rows.extend(rows.nonneg);
    for cone in rows.soc {
        cones.push(SecondOrderConeT(cone.len()));
        a_rows.extend(cone);
    }
    // Clarabel form: A x + s = b with s in the cone, and s = expr = c + a·x.
    let (mut ii, mut jj, mut vv, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, e) in a_rows.iter().enumerate() {
        for &(j, a) in &e.terms {
            if a != 0.0 {
                ii.push(r);
                jj.push(j);
                vv.push(-a);
            }
        }
        b.push(e.c);
    }
    let a = CscMatrix::new_from_triplets(a_rows.len(), n, ii, jj, vv);
    let p = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    q[n - 1] = 1.0;
    let settings = DefaultSettingsBuilder::default().verbose(false).max_iter(200).build().expect("valid settings");

    let solved = DefaultSolver::new(&p, &q, &a, &b, &cones, settings).ok().and_then(|mut solver| {
        solver.solve();
        matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved)
            .then(|| solver.solution.x.clone())
    });
    let junction = |x: &[f64], k: usize| (Vec3::new(x[4 * k - 4], x[4 * k - 3], x[4 * k - 2]), x[4 * k - 1]);
    if let Some(x) = &solved {
        if let Some(found) = rebuild(sets, start, terminal, v_max, |k| Some(junction(x, k))) {
            return Ok(found);
        }
    }
    rebuild(sets, start, terminal, v_max, |_| None).ok_or(Infeasible::Unreachable)
}

/// Replays the set sequence exactly, steering each junction toward `guess`
/// (the solver's point, or the current position when absent).
fn rebuild(
    sets: &[AuxSet],
    (p0, t0): (Vec3, f64),
    terminal: &TargetWindow,
    v_max: f64,
    guess: impl Fn(usize) -> Option<(Vec3, f64)>,
) -> Option<TrajOptSolution> {
    let last = sets.len() - 1;
    let (mut p, mut t) = (p0, t0);
    let mut segs = Vec::with_capacity(sets.len());
    for k in 0..last {
        let (gp, gt) = guess(k + 1).unwrap_or((p, t));
        let next = &sets[k + 1];
        let (q, s) = match &sets[k] {
            AuxSet::Window(w) => {
                let span = match next {
                    AuxSet::Region(b) => time_span_in(b, w)?,
                    AuxSet::Free => Interval { lo: t, hi: t },
                    AuxSet::Window(_) => return None,
                };
                let lo = t.max(span.lo);
                let hi = span.hi_arith().min(w.window.hi_arith());
                if lo > hi + 1e-12 * (1.0 + hi.abs()) {
                    return None;
                }
                let s = gt.clamp(lo, hi.max(lo));
                (w.position(s), s)
            }
            AuxSet::Region(b) => match next {
                AuxSet::Region(b2) => {
                    let meet = overlap(b, b2)?;
                    let q = meet.clamp(&gp);
                    (q, t + (q - p).norm() / v_max)
                }
                AuxSet::Window(wn) => {
                    let span = time_span_in(b, wn)?;
                    let s = earliest_intercept(&p, t, wn, span, v_max)?;
                    (wn.position(s), s)
                }
                // The free leg ignores obstacles, so stopping here is never worse.
                AuxSet::Free => (p, t),
            },
            AuxSet::Free => return None,
        };
        segs.push(Segment { p_start: p, t_start: t, p_end: q, t_end: s });
        (p, t) = (q, s);
    }
    let tf = earliest_intercept(&p, t, terminal, terminal.window, v_max)?;
    segs.push(Segment { p_start: p, t_start: t, p_end: terminal.position(tf), t_end: tf });
    Some(finish(segs, t, tf))
}

/// Closed overlap of two boxes, tolerating faces that miss by rounding.
fn overlap(a: &Aabb, b: &Aabb) -> Option<Aabb> {
    let mut lo = a.lo.sup(&b.lo);
    let mut hi = a.hi.inf(&b.hi);
    for i in 0..3 {
        if lo[i] > hi[i] {
            if lo[i] - hi[i] > MEMBER_TOL {
                return None;
            }
            let mid = 0.5 * (lo[i] + hi[i]);
            (lo[i], hi[i]) = (mid, mid);
        }
    }
    Some(Aabb { lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::WindowId;

    fn still(p: Vec3, lo: f64, hi: f64) -> TargetWindow {
        TargetWindow { id: WindowId(1), target: 1, slot: 0, window: Interval { lo, hi }, start: p, velocity: Vec3::zeros() }
    }

    fn cube(lo: [f64; 3], hi: [f64; 3]) -> Aabb {
        Aabb::new(Vec3::from(lo), Vec3::from(hi))
    }

    fn check(sol: &TrajOptSolution, sets: &[AuxSet], v_max: f64) {
        assert!(sol.trajectory.defects(v_max).is_empty(), "{:?}", sol.trajectory.defects(v_max));
        for (seg, set) in sol.trajectory.segments.iter().zip(sets) {
            if let AuxSet::Region(b) = set {
                assert!(b.contains(&seg.p_start, 1e-9) && b.contains(&seg.p_end, 1e-9), "{seg:?} leaves {b:?}");
            }
        }
    }

    #[test]
    fn colocated_terminal_costs_nothing() {
        let b = cube([0.0; 3], [10.0; 3]);
        let p = Vec3::new(1.0, 1.0, 1.0);
        let aux = AuxPath { sets: vec![AuxSet::Region(b), AuxSet::Free] };
        let sol = min_time_over_path(&aux, (p, 2.0), &still(p, 0.0, 5.0), 1.0, f64::INFINITY).unwrap();
        assert_eq!(sol.t_final, 2.0);
        assert!(sol.trajectory.segments.iter().all(|s| s.length() == 0.0));
    }

    #[test]
    fn straight_line_in_one_box() {
        let b = cube([0.0; 3], [10.0; 3]);
        let aux = AuxPath { sets: vec![AuxSet::Region(b), AuxSet::Free] };
        let sol =
            min_time_over_path(&aux, (Vec3::new(1.0, 1.0, 1.0), 0.0), &still(Vec3::new(4.0, 5.0, 1.0), 0.0, 50.0), 2.0, 99.0)
                .unwrap();
        assert!((sol.t_final - 2.5).abs() < 1e-12);
    }

    #[test]
    fn deadline_and_window_infeasibility() {
        let b = cube([0.0; 3], [10.0; 3]);
        let aux = AuxPath { sets: vec![AuxSet::Region(b), AuxSet::Free] };
        let target = still(Vec3::new(5.0, 0.0, 0.0), 0.0, 50.0);
        assert_eq!(min_time_over_path(&aux, (Vec3::zeros(), 0.0), &target, 1.0, 4.0), Err(Infeasible::Deadline));
        let closed = still(Vec3::new(5.0, 0.0, 0.0), 0.0, 4.0);
        assert_eq!(min_time_over_path(&aux, (Vec3::zeros(), 0.0), &closed, 1.0, 99.0), Err(Infeasible::Unreachable));
    }

    #[test]
    fn bend_around_a_blocked_corner() {
        // L-shaped corridor: the blocked cell [1,2]×[0,1] forces a bend at (1, 1).
        let a = cube([0.0, 0.0, 0.0], [1.0, 2.0, 1.0]);
        let b = cube([0.0, 1.0, 0.0], [2.0, 2.0, 1.0]);
        let start = Vec3::new(0.5, 0.0, 0.5);
        let goal = Vec3::new(2.0, 1.5, 0.5);
        let aux = AuxPath { sets: vec![AuxSet::Region(a), AuxSet::Region(b), AuxSet::Free] };
        let target = still(goal, 0.0, 100.0);
        let sol = min_time_over_path(&aux, (start, 0.0), &target, 1.0, f64::INFINITY).unwrap();
        check(&sol, &aux.sets, 1.0);
        let corner = Vec3::new(1.0, 1.0, 0.5);
        let expect = (corner - start).norm() + (goal - corner).norm();
        assert!((sol.t_final - expect).abs() < 1e-6, "{} vs {expect}", sol.t_final);
        assert!((sol.g - (corner - start).norm()).abs() < 1e-6);
    }

    #[test]
    fn ride_then_leave_through_a_box() {
        // Start riding a target heading for box B, which the agent can only
        // enter where the target does.
        let w = TargetWindow {
            id: WindowId(1),
            target: 1,
            slot: 0,
            window: Interval { lo: 0.0, hi: 10.0 },
            start: Vec3::new(0.0, 0.5, 0.5),
            velocity: Vec3::new(0.5, 0.0, 0.0),
        };
        let b = cube([2.0, 0.0, 0.0], [3.0, 1.0, 1.0]);
        let goal = still(Vec3::new(3.0, 0.5, 0.5), 0.0, 100.0);
        let aux = AuxPath { sets: vec![AuxSet::Window(w.clone()), AuxSet::Region(b), AuxSet::Free] };
        let sol = min_time_over_path(&aux, (w.start, 0.0), &goal, 1.0, f64::INFINITY).unwrap();
        assert!((sol.t_final - 5.0).abs() < 1e-6, "{}", sol.t_final);
        assert!(sol.trajectory.defects(1.0).is_empty());
    }

    #[test]
    fn meeting_windows() {
        let a = TargetWindow {
            id: WindowId(1),
            target: 1,
            slot: 0,
            window: Interval { lo: 0.0, hi: 4.0 },
            start: Vec3::zeros(),
            velocity: Vec3::new(1.0, 0.0, 0.0),
        };
        let mut b = a.clone();
        b.id = WindowId(2);
        b.target = 2;
        b.start = Vec3::new(2.0, -2.0, 0.0);
        b.velocity = Vec3::new(0.0, 1.0, 0.0);
        let aux = AuxPath { sets: vec![AuxSet::Window(a.clone()), AuxSet::Window(b.clone()), AuxSet::Free] };
        let sol = min_time_over_path(&aux, (Vec3::new(0.5, 0.0, 0.0), 0.5), &b, 1.0, 10.0).unwrap();
        assert!((sol.t_final - 2.0).abs() < 1e-6 && (sol.g - 2.0).abs() < 1e-6);
    }

    #[test]
    fn trajectory_position_and_defects() {
        let t = Trajectory {
            segments: vec![
                Segment { p_start: Vec3::zeros(), t_start: 0.0, p_end: Vec3::new(1.0, 0.0, 0.0), t_end: 1.0 },
                Segment { p_start: Vec3::new(1.0, 0.0, 0.0), t_start: 1.0, p_end: Vec3::new(1.0, 2.0, 0.0), t_end: 2.0 },
            ],
        };
        assert_eq!(t.position(0.5), Some(Vec3::new(0.5, 0.0, 0.0)));
        assert_eq!(t.position(9.0), Some(Vec3::new(1.0, 2.0, 0.0)));
        assert_eq!(t.defects(1.0), vec![TrajectoryDefect::TooFast { index: 1, speed: 2.0 }]);
        assert!(t.defects(2.0).is_empty());
    }
}
