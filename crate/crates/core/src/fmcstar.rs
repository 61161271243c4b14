//! Focal search over the graph of convex sets for a trajectory executing a
//! partial tour, the low-level driver that runs it prefix by prefix, and the
//! pruning dictionary shared by every search of one solve.
//!
//! Window indices into a partial tour `Ω` are 0-based here: `Ω[0]` is the depot.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use crate::geometry::Vec3;
use crate::kinematics::{earliest_arrival, TargetWindow, WindowId};
use crate::trajopt::{min_time_over_path, AuxPath, AuxSet, Infeasible, Segment, Trajectory};
use crate::world::{Gcs, NodeId, NodeKind};

/// Tolerance of the "already reached at window start" prune.
pub const START_PRUNE_EPS: f64 = 1e-8;
const DEADLINE_TOL: f64 = 1e-9;

/// Bitmask of target ids; bit 0 is the depot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct TargetSet(pub u64);

impl TargetSet {
    pub fn with(self, target: usize) -> Self {
        Self(self.0 | (1 << target))
    }

    pub fn contains(&self, target: usize) -> bool {
        self.0 & (1 << target) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PruneKey {
    pub targets: TargetSet,
    pub last: WindowId,
}

/// Key of a nonempty partial tour: its visited targets and its last window.
pub fn key(partial: &[WindowId], windows: &[TargetWindow]) -> PruneKey {
    let targets = partial.iter().fold(TargetSet::default(), |s, w| s.with(windows[w.0].target));
    PruneKey { targets, last: *partial.last().expect("partial tours are nonempty") }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DictEvent {
    Read { key: PruneKey, value: f64, present: bool },
    Write { key: PruneKey, old: f64, new: f64 },
}

/// Best known cost per key. Missing keys read as the end of the key's window;
/// values only ever decrease.
#[derive(Debug, Default)]
pub struct PruneDict {
    values: HashMap<PruneKey, f64>,
    audit: Option<RefCell<Vec<DictEvent>>>,
}

impl PruneDict {
    pub fn new() -> Self {
        Self::default()
    }

    /// A dictionary that records every read and write.
    pub fn with_audit() -> Self {
        Self { values: HashMap::new(), audit: Some(RefCell::new(Vec::new())) }
    }

    fn log(&self, event: DictEvent) {
        if let Some(a) = &self.audit {
            a.borrow_mut().push(event);
        }
    }

    /// Stored value, if any.
    pub fn lookup(&self, key: PruneKey) -> Option<f64> {
        let v = self.values.get(&key).copied();
        if let Some(value) = v {
            self.log(DictEvent::Read { key, value, present: true });
        }
        v
    }

    /// Stored value, or `default` (the key window's end) when absent.
    pub fn get(&self, key: PruneKey, default: f64) -> f64 {
        let (value, present) = match self.values.get(&key) {
            Some(v) => (*v, true),
            None => (default, false),
        };
        self.log(DictEvent::Read { key, value, present });
        value
    }

    /// Stores `value` if it beats the current value; returns whether it did.
    pub fn lower(&mut self, key: PruneKey, value: f64, default: f64) -> bool {
        let old = self.values.get(&key).copied().unwrap_or(default);
        if value < old {
            self.values.insert(key, value);
            self.log(DictEvent::Write { key, old, new: value });
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn audit_log(&self) -> Vec<DictEvent> {
        self.audit.as_ref().map(|a| a.borrow().clone()).unwrap_or_default()
    }
}

/// A GCS path with its bounds and the obstacle-free trajectory through its
/// last window-node.
#[derive(Debug, Clone)]
pub struct SearchPath {
    pub nodes: Vec<NodeId>,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    /// Windows of `Ω` not yet matched by a window-node.
    pub unv: usize,
    /// Window-nodes in the path (the depot's included).
    pub visited: usize,
    /// Position in `nodes` of the last window-node.
    pub last_window_pos: usize,
    pub l_traj: Rc<Vec<Segment>>,
    pub l_time: f64,
    pub l_point: Vec3,
    /// Interception time of each window-node in order.
    pub intercepts: Rc<Vec<f64>>,
    pub seq: u64,
}

impl SearchPath {
    pub fn root(gcs: &Gcs, omega_len: usize) -> Self {
        let depot = &gcs.windows[0];
        Self {
            nodes: vec![gcs.window_node(WindowId(0))],
            f: 0.0,
            g: 0.0,
            h: 0.0,
            unv: omega_len - 1,
            visited: 1,
            last_window_pos: 0,
            l_traj: Rc::new(Vec::new()),
            l_time: 0.0,
            l_point: depot.position(0.0),
            intercepts: Rc::new(vec![0.0]),
            seq: 0,
        }
    }

    pub fn is_complete(&self, omega_len: usize) -> bool {
        self.visited >= omega_len
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory { segments: self.l_traj.to_vec() }
    }
}

/// Smallest index `n` whose window-node `P` has not reached; `|Ω|` when complete.
pub fn next_window_index(path: &SearchPath) -> usize {
    path.visited
}

/// Search parameters shared by every call of one solve.
#[derive(Debug, Clone, Copy)]
pub struct Fmc<'a> {
    pub gcs: &'a Gcs,
    pub v_max: f64,
    pub w: f64,
    pub trace: bool,
}

impl Fmc<'_> {
    fn window(&self, id: WindowId) -> &TargetWindow {
        &self.gcs.windows[id.0]
    }

    fn key(&self, partial: &[WindowId]) -> PruneKey {
        key(partial, &self.gcs.windows)
    }

    fn deadline(&self, dict: &PruneDict, omega: &[WindowId], j: usize) -> f64 {
        dict.get(self.key(&omega[..=j]), self.window(omega[j]).window.hi)
    }

    /// A window of `Ω` at or after `n` is already reached at its opening time.
    fn start_reached(&self, dict: &PruneDict, omega: &[WindowId], n: usize) -> bool {
        (n..omega.len()).any(|j| {
            dict.lookup(self.key(&omega[..=j]))
                .is_some_and(|v| v <= self.window(omega[j]).window.lo + START_PRUNE_EPS)
        })
    }
}

/// GCS nodes that may extend `path`: neighbors of its last node that were not
/// visited since its last window-node, and among window-nodes only `Ω[n]`'s.
pub fn successor_nodes(path: &SearchPath, gcs: &Gcs, omega: &[WindowId]) -> Vec<NodeId> {
    let n = next_window_index(path);
    if n >= omega.len() {
        return Vec::new();
    }
    let last = *path.nodes.last().expect("paths are nonempty");
    let since = &path.nodes[path.last_window_pos + 1..];
    gcs.neighbors(last)
        .iter()
        .copied()
        .filter(|x| match gcs.node(*x).kind {
            NodeKind::Window(w) => w == omega[n],
            NodeKind::Region(_) => !since.contains(x),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pruned {
    Trajopt(Infeasible),
    Deadline,
    ChainDeadline,
}

/// Appends `x` to `path`, optimizes the auxiliary path and chains the
/// remaining windows. Writes the dictionary when `x` is `Ω[n]`'s window-node.
pub fn evaluate_successor(
    fmc: &Fmc,
    path: &SearchPath,
    x: NodeId,
    omega: &[WindowId],
    dict: &mut PruneDict,
) -> Result<SearchPath, Pruned> {
    let n = next_window_index(path);
    let terminal = fmc.window(omega[n]);
    let mut sets: Vec<AuxSet> = path.nodes[path.last_window_pos..]
        .iter()
        .chain(std::iter::once(&x))
        .map(|id| match &fmc.gcs.node(*id).kind {
            NodeKind::Region(b) => AuxSet::Region(*b),
            NodeKind::Window(w) => AuxSet::Window(fmc.window(*w).clone()),
        })
        .collect();
    sets.push(AuxSet::Free);
    let deadline = fmc.deadline(dict, omega, n);
    let sol = min_time_over_path(&AuxPath { sets }, (path.l_point, path.l_time), terminal, fmc.v_max, deadline)
        .map_err(Pruned::Trajopt)?;
    let mut t = sol.t_final;
    if t > deadline + DEADLINE_TOL {
        return Err(Pruned::Deadline);
    }
    let g = sol.g;
    let mut next = path.clone();
    next.nodes.push(x);
    next.g = g;
    if x == fmc.gcs.window_node(omega[n]) {
        let segs = &sol.trajectory.segments;
        let mut traj = path.l_traj.as_ref().clone();
        traj.extend_from_slice(&segs[..segs.len() - 1]);
        dict.lower(fmc.key(&omega[..=n]), g, terminal.window.hi);
        next.l_point = traj.last().map_or(path.l_point, |s| s.p_end);
        next.l_traj = Rc::new(traj);
        next.l_time = g;
        next.visited += 1;
        next.last_window_pos = next.nodes.len() - 1;
        let mut hits = path.intercepts.as_ref().clone();
        hits.push(g);
        next.intercepts = Rc::new(hits);
        t = g;
    }
    for j in n + 1..omega.len() {
        t = earliest_arrival(fmc.window(omega[j - 1]), fmc.window(omega[j]), t, fmc.v_max).unwrap_or(f64::INFINITY);
        if !(t <= fmc.deadline(dict, omega, j) + DEADLINE_TOL) {
            return Err(Pruned::ChainDeadline);
        }
    }
    next.f = t;
    next.h = (t - g).max(0.0);
    next.unv = omega.len() - next.visited;
    Ok(next)
}

/// Carries the final OPEN of the search for `Ω[..|Ω|−1]` over to `Ω`.
pub fn reuse_open(fmc: &Fmc, prev_open: Vec<SearchPath>, omega: &[WindowId], dict: &PruneDict) -> Vec<SearchPath> {
    let m = omega.len();
    let (from, to) = (fmc.window(omega[m - 2]), fmc.window(omega[m - 1]));
    prev_open
        .into_iter()
        .filter_map(|mut p| {
            if fmc.start_reached(dict, omega, next_window_index(&p)) {
                return None;
            }
            p.f = earliest_arrival(from, to, p.f, fmc.v_max).unwrap_or(f64::INFINITY);
            if !p.f.is_finite() {
                return None;
            }
            p.h = (p.f - p.g).max(0.0);
            p.unv = m - p.visited;
            Some(p)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopEvent {
    pub f: f64,
    pub g: f64,
    pub unv: usize,
    pub node: NodeId,
    /// `f_min(OPEN)` when the path was selected.
    pub f_min: f64,
}

/// Expansion and wall-clock limits; unlimited by default.
#[derive(Debug, Clone, Default)]
pub struct Budget {
    pub max_expansions: Option<u64>,
    pub deadline: Option<Instant>,
    pub expansions: u64,
}

impl Budget {
    pub fn exhausted(&self) -> bool {
        self.max_expansions.is_some_and(|m| self.expansions >= m) || self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmcResult {
    /// `f_min(OPEN)` at return, capped by the cost when a trajectory exists.
    pub lower_bound: f64,
    pub trajectory: Option<Trajectory>,
    /// Cost of the trajectory; `+∞` without one.
    pub cost: f64,
    /// Interception time of each window of `Ω`.
    pub intercepts: Vec<f64>,
    /// GCS path of the trajectory.
    pub path: Vec<NodeId>,
    pub budget_hit: bool,
}

#[derive(Debug, Clone)]
pub struct FmcOutcome {
    pub result: FmcResult,
    pub open: Vec<SearchPath>,
    pub expansions: u64,
    pub trace: Vec<PopEvent>,
}

fn f_min(open: &[SearchPath]) -> f64 {
    open.iter().map(|p| p.f).fold(f64::INFINITY, f64::min)
}

/// Focal search for a trajectory executing `omega`.
pub fn fmc_star(
    fmc: &Fmc,
    omega: &[WindowId],
    dict: &mut PruneDict,
    reused_open: Option<Vec<SearchPath>>,
    budget: &mut Budget,
) -> FmcOutcome {
    let m = omega.len();
    assert!(m >= 2 && omega[0] == WindowId(0), "partial tours start at the depot and have a second window");
    let mut open = match reused_open {
        Some(prev) => reuse_open(fmc, prev, omega, dict),
        None => vec![SearchPath::root(fmc.gcs, m)],
    };
    let mut seq = open.iter().map(|p| p.seq).max().unwrap_or(0) + 1;
    let goal_key = fmc.key(omega);
    let goal_hi = fmc.window(omega[m - 1]).window.hi;
    let mut best: Option<SearchPath> = None;
    let mut trace = Vec::new();
    let mut expansions = 0;
    let mut budget_hit = false;
    while !open.is_empty() {
        let fm = f_min(&open);
        if best.is_some() && !(dict.get(goal_key, goal_hi) > fmc.w * fm) {
            break;
        }
        let bound = fmc.w * fm + 1e-12 * (1.0 + fm.abs());
        let pick = open
            .iter()
            .enumerate()
            .filter(|(_, p)| p.f <= bound && !p.is_complete(m))
            .min_by(|(_, a), (_, b)| {
                a.unv.cmp(&b.unv).then((a.g + fmc.w * a.h).total_cmp(&(b.g + fmc.w * b.h))).then(a.seq.cmp(&b.seq))
            })
            .map(|(i, _)| i);
        let Some(i) = pick else {
            break;
        };
        if budget.exhausted() {
            budget_hit = true;
            break;
        }
        budget.expansions += 1;
        expansions += 1;
        let path = open.swap_remove(i);
        if fmc.trace {
            trace.push(PopEvent { f: path.f, g: path.g, unv: path.unv, node: *path.nodes.last().unwrap(), f_min: fm });
        }
        if fmc.start_reached(dict, omega, next_window_index(&path)) {
            continue;
        }
        for x in successor_nodes(&path, fmc.gcs, omega) {
            let Ok(mut child) = evaluate_successor(fmc, &path, x, omega, dict) else {
                continue;
            };
            child.seq = seq;
            seq += 1;
            if child.is_complete(m) && best.as_ref().is_none_or(|b| child.g < b.g) {
                best = Some(child.clone());
            }
            open.push(child);
        }
    }
    let fm = f_min(&open);
    let result = match best {
        Some(b) => FmcResult {
            lower_bound: fm.min(b.g),
            cost: b.g,
            trajectory: Some(b.trajectory()),
            intercepts: b.intercepts.to_vec(),
            path: b.nodes.clone(),
            budget_hit,
        },
        None => FmcResult {
            lower_bound: if budget_hit { fm } else { f64::INFINITY },
            trajectory: None,
            cost: f64::INFINITY,
            intercepts: Vec::new(),
            path: Vec::new(),
            budget_hit,
        },
    };
    FmcOutcome { result, open, expansions, trace }
}

/// One `fmc_star` invocation, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct FmcCallRecord {
    pub prefix: Vec<WindowId>,
    pub lower_bound: f64,
    pub cost: f64,
    pub expansions: u64,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub tour: Vec<WindowId>,
    pub trajectory: Trajectory,
    pub intercepts: Vec<f64>,
    pub t_f: f64,
}

struct CacheEntry {
    open: Vec<SearchPath>,
    result: FmcResult,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LowLevelReport {
    /// Prefixes the high-level search must now exclude.
    pub forbid: Vec<Vec<WindowId>>,
    pub improved: bool,
    pub budget_hit: bool,
}

/// State carried across the low-level searches of one solve.
#[derive(Default)]
pub struct LowLevelState {
    pub dict: PruneDict,
    cache: HashMap<Vec<WindowId>, CacheEntry>,
    pub incumbent: Option<Incumbent>,
    /// Running minimum of the lower bounds of executed tours.
    pub lb_l: f64,
    pub calls: Vec<FmcCallRecord>,
    pub paths_expanded: u64,
    pub trace: Vec<PopEvent>,
}

impl LowLevelState {
    pub fn new(dict: PruneDict) -> Self {
        Self { dict, lb_l: f64::INFINITY, ..Self::default() }
    }

    /// Whether a prefix has already been searched.
    pub fn saw_before(&self, prefix: &[WindowId]) -> bool {
        self.cache.contains_key(prefix)
    }

    /// Runs the focal search on each unseen prefix of `tour`, shortest first.
    /// A prefix without a trajectory is forbidden and ends the pass; a fully
    /// executed tour is forbidden, may replace the incumbent, and lowers `LB_L`.
    pub fn low_level_search(&mut self, fmc: &Fmc, tour: &[WindowId], budget: &mut Budget) -> LowLevelReport {
        let mut report = LowLevelReport::default();
        for i in 2..=tour.len() {
            let prefix = &tour[..i];
            if let Some(entry) = self.cache.get(prefix) {
                if entry.result.trajectory.is_none() {
                    report.forbid.push(prefix.to_vec());
                    return report;
                }
                continue;
            }
            let reused = if i > 2 { self.cache.get(&tour[..i - 1]).map(|e| e.open.clone()) } else { None };
            let was_reused = reused.is_some();
            let out = fmc_star(fmc, prefix, &mut self.dict, reused, budget);
            self.paths_expanded += out.expansions;
            self.trace.extend(out.trace);
            self.calls.push(FmcCallRecord {
                prefix: prefix.to_vec(),
                lower_bound: out.result.lower_bound,
                cost: out.result.cost,
                expansions: out.expansions,
                reused: was_reused,
            });
            if out.result.budget_hit {
                report.budget_hit = true;
                return report;
            }
            let failed = out.result.trajectory.is_none();
            self.cache.insert(prefix.to_vec(), CacheEntry { open: out.open, result: out.result });
            if failed {
                report.forbid.push(prefix.to_vec());
                return report;
            }
        }
        let result = &self.cache[tour].result;
        if self.incumbent.as_ref().is_none_or(|inc| result.cost < inc.t_f) {
            self.incumbent = Some(Incumbent {
                tour: tour.to_vec(),
                trajectory: result.trajectory.clone().expect("executed tours carry a trajectory"),
                intercepts: result.intercepts.clone(),
                t_f: result.cost,
            });
            report.improved = true;
        }
        self.lb_l = self.lb_l.min(result.lower_bound);
        report.forbid.push(tour.to_vec());
        report
    }
}
