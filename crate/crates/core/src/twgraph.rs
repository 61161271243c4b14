//! The target-window graph: one node per target-window, one edge per ordered
//! pair of windows of distinct targets that the agent can link ignoring obstacles.

use std::collections::HashMap;

use crate::kinematics::{earliest_arrival, latest_departure, shortest_travel, TargetWindow, WindowId};

#[derive(Debug, Clone, PartialEq)]
pub struct TwEdge {
    pub from: WindowId,
    pub to: WindowId,
    /// Latest departure from `from`.
    pub l: f64,
    /// Earliest arrival at `to` when leaving at the start of `from`.
    pub e: f64,
    /// Shortest travel time.
    pub s: f64,
}

#[derive(Debug, Clone)]
pub struct TargetWindowGraph {
    pub windows: Vec<TargetWindow>,
    pub edges: Vec<TwEdge>,
    pub v_max: f64,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    lookup: HashMap<(WindowId, WindowId), usize>,
}

impl TargetWindowGraph {
    /// `windows[0]` must be the depot and `windows[k].id == WindowId(k)`.
    pub fn build(windows: &[TargetWindow], v_max: f64) -> Self {
        assert!(windows.first().is_some_and(TargetWindow::is_depot), "depot window missing");
        let mut edges = Vec::new();
        for u in windows {
            for v in windows {
                if u.target == v.target {
                    continue;
                }
                let l = latest_departure(u, v, v_max);
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let e = earliest_arrival(u, v, u.window.lo, v_max).expect("window start is in range");
                let s = shortest_travel(u, v, v_max);
                edges.push(TwEdge { from: u.id, to: v.id, l, e, s });
            }
        }
        let mut outgoing = vec![Vec::new(); windows.len()];
        let mut incoming = vec![Vec::new(); windows.len()];
        let mut lookup = HashMap::new();
        for (k, edge) in edges.iter().enumerate() {
            outgoing[edge.from.0].push(k);
            incoming[edge.to.0].push(k);
            lookup.insert((edge.from, edge.to), k);
        }
        Self { windows: windows.to_vec(), edges, v_max, outgoing, incoming, lookup }
    }

    pub fn window(&self, id: WindowId) -> &TargetWindow {
        &self.windows[id.0]
    }

    pub fn edge(&self, from: WindowId, to: WindowId) -> Option<&TwEdge> {
        self.lookup.get(&(from, to)).map(|&k| &self.edges[k])
    }

    pub fn out_edges(&self, from: WindowId) -> impl Iterator<Item = &TwEdge> {
        self.outgoing[from.0].iter().map(|&k| &self.edges[k])
    }

    pub fn in_edges(&self, to: WindowId) -> impl Iterator<Item = &TwEdge> {
        self.incoming[to.0].iter().map(|&k| &self.edges[k])
    }

    /// Number of non-depot targets.
    pub fn target_count(&self) -> usize {
        self.windows.iter().map(|w| w.target).max().unwrap_or(0)
    }

    /// Earliest arrival at `to` when departing `from` at `t`; `+∞` without an edge.
    pub fn arrive(&self, from: WindowId, to: WindowId, t: f64) -> f64 {
        let Some(edge) = self.edge(from, to) else {
            return f64::INFINITY;
        };
        if t > edge.l {
            return f64::INFINITY;
        }
        earliest_arrival(self.window(from), self.window(to), t, self.v_max).unwrap_or(f64::INFINITY)
    }
}
