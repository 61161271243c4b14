//! High-level search over the target-window graph.
//!
//! Best-first branch and bound over depot-rooted partial tours. A node's bound
//! is its obstacle-unaware arrival time plus, for each target still to visit
//! and for the return to the depot, the cheapest shortest-travel time of any
//! edge entering it. Complete tours sit in the same frontier, so tours come
//! out in nondecreasing bound order and the frontier minimum is `LB_H`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::ops::ControlFlow;

use crate::kinematics::WindowId;
use crate::twgraph::TargetWindowGraph;

/// Depot-rooted sequence of target-windows, at most one per target.
pub type PartialTour = Vec<WindowId>;

/// A complete tour and its bound (its obstacle-unaware execution time).
#[derive(Debug, Clone, PartialEq)]
pub struct Tour {
    pub windows: Vec<WindowId>,
    pub lb: f64,
}

/// Partial tours no emitted tour may start with.
#[derive(Debug, Clone, Default)]
pub struct ForbiddenSet {
    prefixes: HashSet<Vec<WindowId>>,
}

impl ForbiddenSet {
    pub fn insert(&mut self, prefix: &[WindowId]) -> bool {
        self.prefixes.insert(prefix.to_vec())
    }

    pub fn contains(&self, prefix: &[WindowId]) -> bool {
        self.prefixes.contains(prefix)
    }

    /// Whether some member is a prefix of `partial`.
    pub fn blocks(&self, partial: &[WindowId]) -> bool {
        !self.prefixes.is_empty() && (1..=partial.len()).any(|k| self.prefixes.contains(&partial[..k]))
    }

    pub fn len(&self) -> usize {
        self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelNode {
    pub partial: PartialTour,
    /// Targets visited so far as a bitmask (bit 0 is the depot).
    pub visited: u64,
    pub t_arrive: f64,
    pub lb: f64,
}

impl HighLevelNode {
    pub fn is_complete(&self) -> bool {
        self.partial.len() > 1 && self.partial.last() == Some(&WindowId(0))
    }
}

struct Entry {
    node: HighLevelNode,
    unvisited: u32,
}

impl Entry {
    fn key(&self) -> (f64, u32, &[WindowId]) {
        (self.node.lb, self.unvisited, &self.node.partial)
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed: the heap pops the smallest (lb, unvisited, partial).
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then_with(|| b.2.cmp(a.2))
    }
}

pub struct HighLevelSearch<'g> {
    graph: &'g TargetWindowGraph,
    frontier: BinaryHeap<Entry>,
    forbidden: ForbiddenSet,
    /// Cheapest incoming `s` per target, depot at index 0.
    min_entry: Vec<f64>,
    all_targets: u64,
    pub tours_emitted: usize,
    pub nodes_expanded: usize,
}

impl<'g> HighLevelSearch<'g> {
    pub fn new(graph: &'g TargetWindowGraph, forbidden: ForbiddenSet) -> Self {
        let n = graph.target_count();
        assert!(n < 64, "at most 63 targets are supported");
        let mut min_entry = vec![f64::INFINITY; n + 1];
        for e in &graph.edges {
            let t = graph.window(e.to).target;
            min_entry[t] = min_entry[t].min(e.s);
        }
        let all_targets = if n == 63 { u64::MAX } else { (1u64 << (n + 1)) - 1 };
        let mut search = Self {
            graph,
            frontier: BinaryHeap::new(),
            forbidden,
            min_entry,
            all_targets,
            tours_emitted: 0,
            nodes_expanded: 0,
        };
        let root = HighLevelNode { partial: vec![WindowId(0)], visited: 1, t_arrive: 0.0, lb: search.completion(1) };
        search.push(root);
        search
    }

    fn completion(&self, visited: u64) -> f64 {
        let rest: f64 = (1..self.min_entry.len()).filter(|t| visited & (1 << t) == 0).map(|t| self.min_entry[t]).sum();
        rest + self.min_entry[0]
    }

    fn push(&mut self, node: HighLevelNode) {
        if node.lb.is_finite() {
            let unvisited = (self.all_targets & !node.visited).count_ones() + u32::from(!node.is_complete());
            self.frontier.push(Entry { node, unvisited });
        }
    }

    /// Children extending `node` by one feasible edge.
    pub fn branch(&self, node: &HighLevelNode) -> Vec<HighLevelNode> {
        let last = *node.partial.last().expect("partial tours are nonempty");
        let done = node.visited == self.all_targets;
        let mut children = Vec::new();
        for edge in self.graph.out_edges(last) {
            let target = self.graph.window(edge.to).target;
            let allowed = if done { target == 0 } else { target != 0 && node.visited & (1 << target) == 0 };
            if !allowed || node.t_arrive > edge.l {
                continue;
            }
            let t = self.graph.arrive(last, edge.to, node.t_arrive);
            if !t.is_finite() {
                continue;
            }
            let visited = node.visited | (1 << target);
            let lb = if target == 0 { t } else { t + self.completion(visited) };
            let mut partial = node.partial.clone();
            partial.push(edge.to);
            children.push(HighLevelNode { partial, visited, t_arrive: t, lb });
        }
        children
    }

    pub fn add_forbidden(&mut self, prefix: &[WindowId]) {
        self.forbidden.insert(prefix);
    }

    pub fn forbidden(&self) -> &ForbiddenSet {
        &self.forbidden
    }

    pub fn forbidden_mut(&mut self) -> &mut ForbiddenSet {
        &mut self.forbidden
    }

    fn discard_forbidden_top(&mut self) {
        while let Some(top) = self.frontier.peek() {
            if !self.forbidden.blocks(&top.node.partial) {
                break;
            }
            self.frontier.pop();
        }
    }

    /// `LB_H`: the smallest bound of any tour this search can still emit.
    pub fn lower_bound(&mut self) -> f64 {
        self.discard_forbidden_top();
        self.frontier.peek().map_or(f64::INFINITY, |e| e.node.lb)
    }

    /// The next admissible tour in bound order, or `None` once exhausted.
    pub fn next_tour(&mut self) -> Option<Tour> {
        loop {
            self.discard_forbidden_top();
            let entry = self.frontier.pop()?;
            if entry.node.is_complete() {
                self.tours_emitted += 1;
                return Some(Tour { windows: entry.node.partial, lb: entry.node.lb });
            }
            self.nodes_expanded += 1;
            for child in self.branch(&entry.node) {
                self.push(child);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighLevelOutcome {
    Exhausted,
    Stopped,
}

/// Callback-driven form: `lb_report` receives `LB_H` before every emission,
/// `on_tour` may grow the forbidden set and stop the search.
pub fn solve(
    graph: &TargetWindowGraph,
    forbidden: ForbiddenSet,
    mut on_tour: impl FnMut(&Tour, &mut ForbiddenSet) -> ControlFlow<()>,
    mut lb_report: impl FnMut(f64),
) -> HighLevelOutcome {
    let mut search = HighLevelSearch::new(graph, forbidden);
    loop {
        lb_report(search.lower_bound());
        let Some(tour) = search.next_tour() else {
            return HighLevelOutcome::Exhausted;
        };
        if on_tour(&tour, search.forbidden_mut()).is_break() {
            return HighLevelOutcome::Stopped;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::kinematics::{Interval, TargetWindow};

    fn still(id: usize, target: usize, lo: f64, hi: f64, p: Vec3) -> TargetWindow {
        TargetWindow { id: WindowId(id), target, slot: 0, window: Interval { lo, hi }, start: p, velocity: Vec3::zeros() }
    }

    fn collect(graph: &TargetWindowGraph, forbid_each: bool) -> Vec<Tour> {
        let mut tours = Vec::new();
        let outcome = solve(
            graph,
            ForbiddenSet::default(),
            |t, f| {
                tours.push(t.clone());
                if forbid_each {
                    f.insert(&t.windows);
                }
                ControlFlow::Continue(())
            },
            |_| {},
        );
        assert_eq!(outcome, HighLevelOutcome::Exhausted);
        tours
    }

    #[test]
    fn single_target_single_tour() {
        let ws = vec![TargetWindow::depot(Vec3::zeros()), still(1, 1, 0.0, 10.0, Vec3::new(1.0, 0.0, 0.0))];
        let g = TargetWindowGraph::build(&ws, 1.0);
        let tours = collect(&g, true);
        assert_eq!(tours.len(), 1);
        assert_eq!(tours[0].windows, vec![WindowId(0), WindowId(1), WindowId(0)]);
        assert_eq!(tours[0].lb, 2.0);
    }

    #[test]
    fn only_feasible_order_is_emitted() {
        // Target 1 closes at 1.5; target 2 opens late, so only 1 → 2 works.
        let ws = vec![
            TargetWindow::depot(Vec3::zeros()),
            still(1, 1, 0.0, 1.5, Vec3::new(1.0, 0.0, 0.0)),
            still(2, 2, 5.0, 6.0, Vec3::new(2.0, 0.0, 0.0)),
        ];
        let g = TargetWindowGraph::build(&ws, 1.0);
        let tours = collect(&g, true);
        assert_eq!(tours.len(), 1);
        assert_eq!(tours[0].windows, vec![WindowId(0), WindowId(1), WindowId(2), WindowId(0)]);
    }

    #[test]
    fn forbidding_a_first_hop() {
        let ws = vec![
            TargetWindow::depot(Vec3::zeros()),
            still(1, 1, 0.0, 50.0, Vec3::new(1.0, 0.0, 0.0)),
            still(2, 2, 0.0, 50.0, Vec3::new(0.0, 1.0, 0.0)),
        ];
        let g = TargetWindowGraph::build(&ws, 1.0);
        let mut forbidden = ForbiddenSet::default();
        forbidden.insert(&[WindowId(0), WindowId(1)]);
        let mut firsts = Vec::new();
        solve(
            &g,
            forbidden,
            |t, f| {
                firsts.push(t.windows[1]);
                f.insert(&t.windows);
                ControlFlow::Continue(())
            },
            |_| {},
        );
        assert_eq!(firsts, vec![WindowId(2)]);
    }

    #[test]
    fn forbidding_everything_exhausts() {
        let ws = vec![TargetWindow::depot(Vec3::zeros()), still(1, 1, 0.0, 10.0, Vec3::new(1.0, 0.0, 0.0))];
        let g = TargetWindowGraph::build(&ws, 1.0);
        let mut forbidden = ForbiddenSet::default();
        forbidden.insert(&[WindowId(0), WindowId(1)]);
        let mut search = HighLevelSearch::new(&g, forbidden);
        assert!(search.next_tour().is_none());
        assert_eq!(search.lower_bound(), f64::INFINITY);
    }

    #[test]
    fn full_tour_is_not_reemitted_after_forbid() {
        let ws = vec![TargetWindow::depot(Vec3::zeros()), still(1, 1, 0.0, 10.0, Vec3::new(1.0, 0.0, 0.0))];
        let g = TargetWindowGraph::build(&ws, 1.0);
        let mut search = HighLevelSearch::new(&g, ForbiddenSet::default());
        let tour = search.next_tour().unwrap();
        search.add_forbidden(&tour.windows);
        assert!(search.next_tour().is_none());
    }

    #[test]
    fn root_has_one_child_per_feasible_out_edge() {
        let ws = vec![
            TargetWindow::depot(Vec3::zeros()),
            still(1, 1, 0.0, 10.0, Vec3::new(1.0, 0.0, 0.0)),
            still(2, 2, 0.0, 10.0, Vec3::new(2.0, 0.0, 0.0)),
            still(3, 2, 20.0, 30.0, Vec3::new(2.0, 0.0, 0.0)),
        ];
        let g = TargetWindowGraph::build(&ws, 1.0);
        let search = HighLevelSearch::new(&g, ForbiddenSet::default());
        let root = HighLevelNode { partial: vec![WindowId(0)], visited: 1, t_arrive: 0.0, lb: 0.0 };
        assert_eq!(search.branch(&root).len(), 3);
    }
}
