//! Grid obstacle maps, free-space box decomposition, and the graph of convex sets.

use thiserror::Error;

use crate::geometry::{intervals_cover, Aabb, Vec3};
use crate::kinematics::{TargetWindow, WindowId};

const EDGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("cell size must be positive, got {0}")]
    NonPositiveCellSize(f64),
    #[error("blocked cell {0:?} lies outside the grid")]
    CellOutOfRange([usize; 3]),
    #[error("trajectory of window {0:?} leaves the free space")]
    WindowTrajectoryOutsideFreeSpace(WindowId),
}

/// Uniform occupancy grid; cell `(i, j, k)` spans `origin + cell_size·[i, i+1] × …`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub dims: [usize; 3],
    pub cell_size: f64,
    pub origin: Vec3,
    occupied: Vec<bool>,
}

impl GridMap {
    pub fn new(dims: [usize; 3], cell_size: f64, origin: Vec3, blocked: &[[usize; 3]]) -> Result<Self, WorldError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(WorldError::NonPositiveCellSize(cell_size));
        }
        let mut map = Self { dims, cell_size, origin, occupied: vec![false; dims.iter().product()] };
        for &c in blocked {
            if (0..3).any(|i| c[i] >= dims[i]) {
                return Err(WorldError::CellOutOfRange(c));
            }
            let idx = map.index(c);
            map.occupied[idx] = true;
        }
        Ok(map)
    }

    pub fn open(dims: [usize; 3], cell_size: f64) -> Self {
        Self::new(dims, cell_size, Vec3::zeros(), &[]).expect("valid open grid")
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    pub fn contains_cell(&self, c: [i64; 3]) -> bool {
        (0..3).all(|i| c[i] >= 0 && (c[i] as usize) < self.dims[i])
    }

    pub fn is_blocked(&self, c: [usize; 3]) -> bool {
        self.occupied[self.index(c)]
    }

    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.dims;
        (0..nx).flat_map(move |i| (0..ny).flat_map(move |j| (0..nz).map(move |k| [i, j, k])))
    }

    pub fn blocked_cells(&self) -> Vec<[usize; 3]> {
        self.cells().filter(|c| self.is_blocked(*c)).collect()
    }

    pub fn cell_box(&self, c: [usize; 3]) -> Aabb {
        let lo = self.origin + Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.cell_size;
        Aabb::new(lo, lo.add_scalar(self.cell_size))
    }

    pub fn cell_center(&self, c: [usize; 3]) -> Vec3 {
        self.cell_box(c).center()
    }

    pub fn bounds(&self) -> Aabb {
        let ext = Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.cell_size;
        Aabb::new(self.origin, self.origin + ext)
    }

    /// Cell containing `p`, if any (upper faces belong to the lower cell at the grid edge).
    pub fn cell_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for i in 0..3 {
            let x = (p[i] - self.origin[i]) / self.cell_size;
            if !(x >= 0.0 && x <= self.dims[i] as f64) {
                return None;
            }
            c[i] = (x.floor() as usize).min(self.dims[i].saturating_sub(1));
        }
        Some(c)
    }
}

/// Half-open cell range `[lo, hi)` forming a box of free cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|i| c[i] >= self.lo[i] && c[i] < self.hi[i])
    }

    pub fn cell_count(&self) -> usize {
        (0..3).map(|i| self.hi[i] - self.lo[i]).product()
    }

    pub fn to_aabb(&self, map: &GridMap) -> Aabb {
        let lo = map.cell_box(self.lo).lo;
        let hi = map.cell_box([self.hi[0] - 1, self.hi[1] - 1, self.hi[2] - 1]).hi;
        Aabb::new(lo, hi)
    }
}

/// Greedy maximal-box cover of the free cells. Cells are seeded in
/// lexicographic order; each seed grows one layer at a time along
/// `+x, −x, +y, −y, +z, −z` until no face can advance. Boxes may overlap.
pub fn decompose_cells(map: &GridMap) -> Vec<CellBox> {
    let mut covered = vec![false; map.occupied.len()];
    let mut boxes = Vec::new();
    for seed in map.cells() {
        if map.is_blocked(seed) || covered[map.index(seed)] {
            continue;
        }
        let b = grow_box(map, seed);
        for c in cells_of(&b) {
            covered[map.index(c)] = true;
        }
        boxes.push(b);
    }
    boxes
}

fn cells_of(b: &CellBox) -> impl Iterator<Item = [usize; 3]> + '_ {
    (b.lo[0]..b.hi[0])
        .flat_map(move |i| (b.lo[1]..b.hi[1]).flat_map(move |j| (b.lo[2]..b.hi[2]).map(move |k| [i, j, k])))
}

fn grow_box(map: &GridMap, seed: [usize; 3]) -> CellBox {
    let mut b = CellBox { lo: seed, hi: [seed[0] + 1, seed[1] + 1, seed[2] + 1] };
    loop {
        let mut grew = false;
        for axis in 0..3 {
            for upward in [true, false] {
                let layer = if upward {
                    if b.hi[axis] >= map.dims[axis] {
                        continue;
                    }
                    b.hi[axis]
                } else {
                    if b.lo[axis] == 0 {
                        continue;
                    }
                    b.lo[axis] - 1
                };
                let mut slab = b;
                slab.lo[axis] = layer;
                slab.hi[axis] = layer + 1;
                if cells_of(&slab).all(|c| !map.is_blocked(c)) {
                    if upward {
                        b.hi[axis] += 1;
                    } else {
                        b.lo[axis] -= 1;
                    }
                    grew = true;
                }
            }
        }
        if !grew {
            return b;
        }
    }
}

/// Free space as closed world-frame boxes; empty for a fully blocked map.
pub fn decompose_free_space(map: &GridMap) -> Vec<Aabb> {
    decompose_cells(map).iter().map(|b| b.to_aabb(map)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Free box × all time.
    Region(Aabb),
    /// Space-time segment of a target-window.
    Window(WindowId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexNode {
    pub id: NodeId,
    pub kind: NodeKind,
}

/// Graph of convex sets: region nodes first, then one window node per window.
#[derive(Debug, Clone)]
pub struct Gcs {
    pub nodes: Vec<ConvexNode>,
    pub windows: Vec<TargetWindow>,
    adjacency: Vec<Vec<NodeId>>,
    region_count: usize,
}

impl Gcs {
    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id.0]
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.0].binary_search(&b).is_ok()
    }

    pub fn node(&self, id: NodeId) -> &ConvexNode {
        &self.nodes[id.0]
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    pub fn window_node(&self, w: WindowId) -> NodeId {
        NodeId(self.region_count + w.0)
    }

    pub fn window_of(&self, id: NodeId) -> Option<&TargetWindow> {
        match self.nodes[id.0].kind {
            NodeKind::Window(w) => Some(&self.windows[w.0]),
            NodeKind::Region(_) => None,
        }
    }

    pub fn region_box(&self, id: NodeId) -> Option<&Aabb> {
        match &self.nodes[id.0].kind {
            NodeKind::Region(b) => Some(b),
            NodeKind::Window(_) => None,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Offsets `[a, b]` from the window start over which the target sits in `region`.
pub fn window_clip(region: &Aabb, w: &TargetWindow) -> Option<(f64, f64)> {
    let span = w.window.hi_arith() - w.window.lo;
    let span = if w.speed() == 0.0 { 0.0 } else { span };
    region.clip_line(&w.start, &w.velocity, 0.0, span, EDGE_TOL)
}

/// Earliest common time of two window segments if they share a space-time point.
pub fn window_meeting(a: &TargetWindow, b: &TargetWindow) -> Option<f64> {
    let lo = a.window.lo.max(b.window.lo);
    let hi = a.window.hi_arith().min(b.window.hi_arith());
    if lo > hi {
        return None;
    }
    let d0 = a.position(lo) - b.position(lo);
    let k = a.velocity - b.velocity;
    let kk = k.norm_squared();
    let tol = EDGE_TOL * (1.0 + a.start.norm().max(b.start.norm()));
    if d0.norm() <= tol {
        return Some(lo);
    }
    if kk == 0.0 {
        return None;
    }
    let tau = (-d0.dot(&k) / kk).clamp(0.0, hi - lo);
    if (d0 + k * tau).norm() > tol {
        return None;
    }
    // First time within tolerance: back off along the approach.
    let along = d0.dot(&k) / kk.sqrt();
    let perp2 = (d0.norm_squared() - along * along).max(0.0);
    let back = ((tol * tol - perp2).max(0.0)).sqrt() / kk.sqrt();
    Some(lo + (tau - back).max(0.0))
}

/// Builds the GCS. Every window segment must be covered by the regions.
pub fn build_gcs(regions: &[Aabb], windows: &[TargetWindow]) -> Result<Gcs, WorldError> {
    let region_count = regions.len();
    let mut nodes: Vec<ConvexNode> =
        regions.iter().enumerate().map(|(i, b)| ConvexNode { id: NodeId(i), kind: NodeKind::Region(*b) }).collect();
    for (k, w) in windows.iter().enumerate() {
        debug_assert_eq!(w.id.0, k, "window table must be indexed by id");
        nodes.push(ConvexNode { id: NodeId(region_count + k), kind: NodeKind::Window(w.id) });
    }
    let mut adjacency = vec![Vec::new(); nodes.len()];
    let mut link = |a: usize, b: usize| {
        adjacency[a].push(NodeId(b));
        adjacency[b].push(NodeId(a));
    };
    for i in 0..region_count {
        for j in i + 1..region_count {
            if regions[i].intersects(&regions[j], EDGE_TOL) {
                link(i, j);
            }
        }
    }
    for (k, w) in windows.iter().enumerate() {
        let span = if w.speed() == 0.0 { 0.0 } else { w.window.hi_arith() - w.window.lo };
        let mut parts = Vec::new();
        for (i, r) in regions.iter().enumerate() {
            if let Some(part) = window_clip(r, w) {
                parts.push(part);
                link(i, region_count + k);
            }
        }
        if !intervals_cover(parts, 0.0, span, EDGE_TOL) {
            return Err(WorldError::WindowTrajectoryOutsideFreeSpace(w.id));
        }
        for (k2, w2) in windows.iter().enumerate().skip(k + 1) {
            if w.target != w2.target && window_meeting(w, w2).is_some() {
                link(region_count + k, region_count + k2);
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort();
        adj.dedup();
    }
    Ok(Gcs { nodes, windows: windows.to_vec(), adjacency, region_count })
}
