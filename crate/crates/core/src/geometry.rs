//! Small 3D primitives shared by the world model, the optimizer and the oracle.

use nalgebra::Vector3;

/// A point or displacement in ℝ³ (meters).
pub type Vec3 = Vector3<f64>;

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        debug_assert!(
            lo.iter().zip(hi.iter()).all(|(a, b)| a <= b),
            "inverted box {lo:?} {hi:?}"
        );
        Self { lo, hi }
    }

    pub fn center(&self) -> Vec3 {
        (self.lo + self.hi) * 0.5
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] - tol && p[i] <= self.hi[i] + tol)
    }

    /// Closed-set overlap; touching faces, edges and corners count.
    pub fn intersects(&self, other: &Aabb, tol: f64) -> bool {
        (0..3).all(|i| self.lo[i] <= other.hi[i] + tol && other.lo[i] <= self.hi[i] + tol)
    }

    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let lo = self.lo.sup(&other.lo);
        let hi = self.hi.inf(&other.hi);
        (0..3).all(|i| lo[i] <= hi[i]).then_some(Aabb { lo, hi })
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        p.sup(&self.lo).inf(&self.hi)
    }

    /// Shrinks every face inward by `margin`; `None` if the box vanishes.
    pub fn shrunk(&self, margin: f64) -> Option<Aabb> {
        let lo = self.lo.add_scalar(margin);
        let hi = self.hi.add_scalar(-margin);
        (0..3).all(|i| lo[i] <= hi[i]).then_some(Aabb { lo, hi })
    }

    /// Parameter range `[s0, s1] ⊆ [a, b]` on which `origin + dir·s` lies in the
    /// box (inflated by `tol` in space).
    pub fn clip_line(&self, origin: &Vec3, dir: &Vec3, a: f64, b: f64, tol: f64) -> Option<(f64, f64)> {
        let (mut s0, mut s1) = (a, b);
        for i in 0..3 {
            let lo = self.lo[i] - tol;
            let hi = self.hi[i] + tol;
            if dir[i].abs() <= f64::EPSILON * (1.0 + origin[i].abs()) {
                if origin[i] < lo || origin[i] > hi {
                    return None;
                }
                continue;
            }
            let mut t1 = (lo - origin[i]) / dir[i];
            let mut t2 = (hi - origin[i]) / dir[i];
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            s0 = s0.max(t1);
            s1 = s1.min(t2);
            if s0 > s1 {
                return None;
            }
        }
        Some((s0, s1))
    }

    /// Does the closed segment `p → q` enter the box interior shrunk by `margin`?
    pub fn segment_hits_interior(&self, p: &Vec3, q: &Vec3, margin: f64) -> bool {
        match self.shrunk(margin) {
            Some(core) => core.clip_line(p, &(q - p), 0.0, 1.0, 0.0).is_some(),
            None => false,
        }
    }
}

/// Merges possibly overlapping closed intervals and reports whether they cover `[a, b]`.
pub(crate) fn intervals_cover(mut parts: Vec<(f64, f64)>, a: f64, b: f64, tol: f64) -> bool {
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut reach = a;
    for (lo, hi) in parts {
        if lo > reach + tol {
            break;
        }
        reach = reach.max(hi);
        if reach >= b - tol {
            return true;
        }
    }
    reach >= b - tol
}

/// Whether the closed segment `p → q` lies in the union of the closed `boxes`.
pub fn segment_covered(boxes: &[Aabb], p: &Vec3, q: &Vec3, tol: f64) -> bool {
    let d = q - p;
    let parts = boxes.iter().filter_map(|b| b.clip_line(p, &d, 0.0, 1.0, tol)).collect();
    intervals_cover(parts, 0.0, 1.0, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Aabb {
        Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn coverage_across_boxes() {
        let b = Aabb::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        let (p, q) = (Vec3::new(0.5, 0.5, 0.5), Vec3::new(1.5, 1.0, 0.5));
        assert!(segment_covered(&[unit(), b], &p, &q, 0.0));
        assert!(!segment_covered(&[unit()], &p, &q, 0.0));
        assert!(segment_covered(&[unit()], &p, &p, 0.0));
    }

    #[test]
    fn touching_boxes_intersect() {
        let b = Aabb::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        assert!(unit().intersects(&b, 0.0));
        let c = Aabb::new(Vec3::new(1.5, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        assert!(!unit().intersects(&c, 0.0));
        let face = unit().intersection(&b).unwrap();
        assert_eq!(face.lo.x, 1.0);
        assert_eq!(face.hi.x, 1.0);
    }

    #[test]
    fn clip_line_through_box() {
        let (s0, s1) = unit()
            .clip_line(&Vec3::new(-1.0, 0.5, 0.5), &Vec3::new(1.0, 0.0, 0.0), 0.0, 10.0, 0.0)
            .unwrap();
        assert!((s0 - 1.0).abs() < 1e-12 && (s1 - 2.0).abs() < 1e-12);
        assert!(unit()
            .clip_line(&Vec3::new(-1.0, 2.0, 0.5), &Vec3::new(1.0, 0.0, 0.0), 0.0, 10.0, 0.0)
            .is_none());
    }

    #[test]
    fn grazing_segment_does_not_hit_interior() {
        let p = Vec3::new(-1.0, 1.0, 0.5);
        let q = Vec3::new(2.0, 1.0, 0.5);
        assert!(!unit().segment_hits_interior(&p, &q, 1e-9));
        let q2 = Vec3::new(2.0, 0.9, 0.5);
        assert!(unit().segment_hits_interior(&p, &q2, 1e-9));
    }

    #[test]
    fn cover_detects_gaps() {
        assert!(intervals_cover(vec![(0.0, 1.0), (0.5, 2.0)], 0.0, 2.0, 0.0));
        assert!(!intervals_cover(vec![(0.0, 1.0), (1.5, 2.0)], 0.0, 2.0, 0.0));
        assert!(intervals_cover(vec![(1.0, 2.0), (0.0, 1.0)], 0.0, 2.0, 0.0));
    }
}
