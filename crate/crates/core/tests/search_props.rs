use std::collections::HashMap;

use mttsp::fmcstar::{DictEvent, PruneDict, PruneKey, TargetSet};
use mttsp::geometry::Vec3;
use mttsp::gtsptw::{ForbiddenSet, HighLevelSearch};
use mttsp::kinematics::{earliest_arrival, Interval, TargetWindow, WindowId};
use mttsp::twgraph::TargetWindowGraph;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Get(u8, u8),
    Lower(u8, u8, f64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..8u8, 0..5u8).prop_map(|(s, l)| Op::Get(s, l)),
        (0..8u8, 0..5u8, 0.0..20.0f64).prop_map(|(s, l, v)| Op::Lower(s, l, v)),
    ]
}

fn key(s: u8, l: u8) -> PruneKey {
    PruneKey { targets: TargetSet(u64::from(s) << 1 | 1), last: WindowId(l as usize) }
}

fn default_of(k: &PruneKey) -> f64 {
    5.0 + 3.0 * k.last.0 as f64
}

/// Stationary targets on a line with windows wide enough that most orders work.
fn graph(spec: &[(f64, f64, f64)]) -> TargetWindowGraph {
    let mut ws = vec![TargetWindow::depot(Vec3::zeros())];
    for (k, &(x, lo, len)) in spec.iter().enumerate() {
        ws.push(TargetWindow {
            id: WindowId(k + 1),
            target: k / 2 + 1,
            slot: k % 2,
            window: Interval { lo, hi: lo + len },
            start: Vec3::new(x, 0.0, 0.0),
            velocity: Vec3::zeros(),
        });
    }
    TargetWindowGraph::build(&ws, 1.0)
}

fn chain(g: &TargetWindowGraph, tour: &[WindowId]) -> f64 {
    let mut t = 0.0;
    for pair in tour.windows(2) {
        t = earliest_arrival(g.window(pair[0]), g.window(pair[1]), t, 1.0).unwrap_or(f64::INFINITY);
        if !t.is_finite() {
            break;
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dict_matches_a_plain_map(ops in prop::collection::vec(op(), 1..200)) {
        let mut dict = PruneDict::with_audit();
        let mut model: HashMap<PruneKey, f64> = HashMap::new();
        for o in &ops {
            match *o {
                Op::Get(s, l) => {
                    let k = key(s, l);
                    prop_assert_eq!(dict.get(k, default_of(&k)), *model.get(&k).unwrap_or(&default_of(&k)));
                }
                Op::Lower(s, l, v) => {
                    let k = key(s, l);
                    let cur = *model.get(&k).unwrap_or(&default_of(&k));
                    prop_assert_eq!(dict.lower(k, v, default_of(&k)), v < cur);
                    if v < cur {
                        model.insert(k, v);
                    }
                }
            }
        }
        for e in dict.audit_log() {
            match e {
                DictEvent::Write { old, new, .. } => prop_assert!(new < old),
                DictEvent::Read { key, value, present: false } => prop_assert_eq!(value, default_of(&key)),
                DictEvent::Read { .. } => {}
            }
        }
    }

    #[test]
    fn tour_bounds_are_admissible_and_sorted(
        spec in prop::collection::vec((-6.0..6.0f64, 0.0..10.0f64, 2.0..15.0f64), 2..=6)
    ) {
        let g = graph(&spec);
        let mut search = HighLevelSearch::new(&g, ForbiddenSet::default());
        let mut last = f64::NEG_INFINITY;
        while let Some(tour) = search.next_tour() {
            search.add_forbidden(&tour.windows);
            let exec = chain(&g, &tour.windows);
            prop_assert!(tour.lb <= exec + 1e-9, "lb {} above chain {}", tour.lb, exec);
            prop_assert!(tour.lb >= last - 1e-9, "tours out of order");
            last = tour.lb;
        }
    }

    #[test]
    fn bound_never_exceeds_a_remaining_tour(
        spec in prop::collection::vec((-6.0..6.0f64, 0.0..10.0f64, 2.0..15.0f64), 2..=6)
    ) {
        let g = graph(&spec);
        let mut search = HighLevelSearch::new(&g, ForbiddenSet::default());
        let mut bounds = Vec::new();
        let mut tours = Vec::new();
        loop {
            bounds.push(search.lower_bound());
            let Some(tour) = search.next_tour() else { break };
            search.add_forbidden(&tour.windows);
            tours.push(tour.lb);
        }
        for (k, lb) in bounds.iter().enumerate() {
            for later in &tours[k..] {
                prop_assert!(*lb <= later + 1e-9);
            }
        }
    }
}
