use mttsp::geometry::Vec3;
use mttsp::kinematics::{earliest_arrival, latest_departure, shortest_travel, Interval, TargetWindow, WindowId};
use proptest::prelude::*;

const V_MAX: f64 = 1.5;

fn window(id: usize) -> impl Strategy<Value = TargetWindow> {
    (0.0..6.0f64, 0.1..4.0f64, prop::array::uniform3(-5.0..5.0f64), prop::array::uniform3(-1.0..1.0f64), 0.0..1.0f64)
        .prop_map(move |(lo, len, p, d, frac)| {
            let dir = Vec3::from(d);
            let velocity = if dir.norm() > 1e-6 { dir.normalize() * (frac * V_MAX) } else { Vec3::zeros() };
            TargetWindow {
                id: WindowId(id),
                target: id,
                slot: 0,
                window: Interval { lo, hi: lo + len },
                start: Vec3::from(p),
                velocity,
            }
        })
}

fn gap(p: &Vec3, t0: f64, v: &TargetWindow, t: f64) -> f64 {
    (v.position(t) - p).norm() - V_MAX * (t - t0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn earliest_arrival_is_reachable_and_minimal(u in window(1), v in window(2), s in 0.0..1.0f64) {
        let t0 = u.window.lo + s * (u.window.hi - u.window.lo);
        let p = u.position(t0);
        let t = earliest_arrival(&u, &v, t0, V_MAX).unwrap();
        if t.is_finite() {
            prop_assert!(t >= t0 - 1e-12 && v.window.contains(t, 1e-9));
            prop_assert!(gap(&p, t0, &v, t) <= 1e-7);
            let earlier = t - 1e-6;
            if earlier >= t0.max(v.window.lo) {
                prop_assert!(gap(&p, t0, &v, earlier) > 0.0);
            }
        } else {
            // Unreachable by the window's end means unreachable at all.
            prop_assert!(v.window.hi < t0 || gap(&p, t0, &v, v.window.hi) > -1e-9);
        }
    }

    #[test]
    fn latest_departure_is_the_edge_of_feasibility(u in window(1), v in window(2)) {
        let l = latest_departure(&u, &v, V_MAX);
        if l.is_finite() {
            prop_assert!(u.window.contains(l, 1e-9));
            prop_assert!(earliest_arrival(&u, &v, l, V_MAX).unwrap() < f64::INFINITY);
            let later = l + 1e-6;
            if later <= u.window.hi {
                prop_assert!(earliest_arrival(&u, &v, later, V_MAX).unwrap() == f64::INFINITY);
            }
        } else {
            prop_assert_eq!(l, f64::NEG_INFINITY);
            prop_assert!(earliest_arrival(&u, &v, u.window.lo, V_MAX).unwrap() == f64::INFINITY);
        }
    }

    #[test]
    fn shortest_travel_bounds_every_departure(u in window(1), v in window(2), s in 0.0..1.0f64) {
        let st = shortest_travel(&u, &v, V_MAX);
        let t0 = u.window.lo + s * (u.window.hi - u.window.lo);
        let e = earliest_arrival(&u, &v, t0, V_MAX).unwrap();
        prop_assert!(st >= 0.0);
        prop_assert!(st <= e - t0 + 1e-9, "{} > {}", st, e - t0);
        prop_assert_eq!(st.is_finite(), latest_departure(&u, &v, V_MAX).is_finite());
    }
}
