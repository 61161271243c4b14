//! Brute-force reference solver for small instances.
//!
//! Obstacle-aware distances come from a visibility graph whose nodes sample
//! every convex obstacle edge at spacing `space_res`. Visibility is coverage
//! of the segment by the closed free cells, grouped into vertical runs, so it
//! shares nothing with the solver's box decomposition. The earliest
//! interception of a window is found by bisection on time, which is valid
//! because targets never outrun the agent. Every tour is then evaluated by
//! chaining earliest interceptions.

use std::collections::HashSet;

use thiserror::Error;

use crate::geometry::{segment_covered, Aabb, Vec3};
use crate::instance::Instance;
use crate::kinematics::{TargetWindow, WindowId};
use crate::world::GridMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{count} tours exceed the oracle budget of {limit}")]
    BudgetExceeded { count: u128, limit: u128 },
    #[error("resolutions must be positive")]
    BadResolution,
    #[error("invalid instance: {0}")]
    Instance(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTour {
    pub windows: Vec<WindowId>,
    pub t_f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub t_f: f64,
    pub tours: Vec<OracleTour>,
    /// One resolution step in time: `space_res / v_max + time_res`.
    pub step: f64,
}

pub const DEFAULT_TOUR_LIMIT: u128 = 200_000;

/// Shortest-path distances from one source point.
pub struct Field {
    source: Vec3,
    dist: Vec<f64>,
}

pub struct Oracle {
    v_max: f64,
    time_res: f64,
    bounds: Aabb,
    free_runs: Vec<Aabb>,
    blocked_runs: Vec<Aabb>,
    nodes: Vec<Vec3>,
    /// Dense `nodes × nodes` visible-edge lengths; `∞` when occluded.
    edges: Vec<f64>,
}

fn runs(map: &GridMap, blocked: bool) -> Vec<Aabb> {
    let [nx, ny, nz] = map.dims;
    let mut out = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let mut k = 0;
            while k < nz {
                if map.is_blocked([i, j, k]) != blocked {
                    k += 1;
                    continue;
                }
                let k0 = k;
                while k < nz && map.is_blocked([i, j, k]) == blocked {
                    k += 1;
                }
                let lo = map.cell_box([i, j, k0]).lo;
                let hi = map.cell_box([i, j, k - 1]).hi;
                out.push(Aabb::new(lo, hi));
            }
        }
    }
    out
}

/// Points on every grid edge where the obstacles form a convex corner.
fn edge_samples(map: &GridMap, space_res: f64) -> Vec<Vec3> {
    let blocked = |c: [i64; 3]| map.contains_cell(c) && map.is_blocked(c.map(|x| x as usize));
    let per_cell = (map.cell_size / space_res).ceil().max(1.0) as usize;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for i in 0..=map.dims[b] as i64 {
            for j in 0..=map.dims[c] as i64 {
                for k in 0..map.dims[a] as i64 {
                    let cell = |di: i64, dj: i64| {
                        let mut x = [0i64; 3];
                        x[a] = k;
                        x[b] = i + di;
                        x[c] = j + dj;
                        blocked(x)
                    };
                    let q = [cell(-1, -1), cell(0, -1), cell(-1, 0), cell(0, 0)];
                    let count = q.iter().filter(|&&x| x).count();
                    let convex = count == 1 || (count == 2 && q[0] == q[3]);
                    if !convex {
                        continue;
                    }
                    for s in 0..=per_cell {
                        let mut idx = [0i64; 3];
                        idx[a] = k * per_cell as i64 + s as i64;
                        idx[b] = i * per_cell as i64;
                        idx[c] = j * per_cell as i64;
                        if seen.insert(idx) {
                            let unit = map.cell_size / per_cell as f64;
                            out.push(map.origin + Vec3::from_fn(|r, _| idx[r] as f64 * unit));
                        }
                    }
                }
            }
        }
    }
    out
}

impl Oracle {
    pub fn new(instance: &Instance, space_res: f64, time_res: f64) -> Result<Self, OracleError> {
        if !(space_res > 0.0 && time_res > 0.0) {
            return Err(OracleError::BadResolution);
        }
        let map = &instance.grid;
        let mut oracle = Self {
            v_max: instance.v_max,
            time_res,
            bounds: map.bounds(),
            free_runs: runs(map, false),
            blocked_runs: runs(map, true),
            nodes: edge_samples(map, space_res),
            edges: Vec::new(),
        };
        let n = oracle.nodes.len();
        let mut edges = vec![f64::INFINITY; n * n];
        for i in 0..n {
            edges[i * n + i] = 0.0;
            for j in i + 1..n {
                let (p, q) = (&oracle.nodes[i], &oracle.nodes[j]);
                if oracle.visible(p, q) {
                    let d = (p - q).norm();
                    edges[i * n + j] = d;
                    edges[j * n + i] = d;
                }
            }
        }
        oracle.edges = edges;
        Ok(oracle)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Whether the straight segment stays in the closed free space.
    pub fn visible(&self, p: &Vec3, q: &Vec3) -> bool {
        if !self.bounds.contains(p, 1e-9) || !self.bounds.contains(q, 1e-9) {
            return false;
        }
        let d = q - p;
        let touches = self.blocked_runs.iter().any(|b| b.clip_line(p, &d, 0.0, 1.0, 1e-9).is_some());
        !touches || segment_covered(&self.free_runs, p, q, 1e-9)
    }

    pub fn field(&self, source: Vec3) -> Field {
        let n = self.nodes.len();
        let mut dist: Vec<f64> = self
            .nodes
            .iter()
            .map(|p| if self.visible(&source, p) { (p - source).norm() } else { f64::INFINITY })
            .collect();
        let mut done = vec![false; n];
        for _ in 0..n {
            let Some(u) = (0..n).filter(|&k| !done[k] && dist[k].is_finite()).min_by(|&x, &y| dist[x].total_cmp(&dist[y]))
            else {
                break;
            };
            done[u] = true;
            let row = &self.edges[u * n..(u + 1) * n];
            for v in 0..n {
                if !done[v] && dist[u] + row[v] < dist[v] {
                    dist[v] = dist[u] + row[v];
                }
            }
        }
        Field { source, dist }
    }

    /// Obstacle-aware distance from the field's source to `y`.
    pub fn distance(&self, field: &Field, y: &Vec3) -> f64 {
        if self.visible(&field.source, y) {
            return (y - field.source).norm();
        }
        let mut order: Vec<(f64, usize)> = field
            .dist
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_finite())
            .map(|(k, d)| (d + (self.nodes[k] - y).norm(), k))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        order.into_iter().find(|(_, k)| self.visible(&self.nodes[*k], y)).map_or(f64::INFINITY, |(d, _)| d)
    }

    /// Earliest time at or after `t0` that an agent starting at the field's
    /// source can meet `w` inside its window; overestimates by at most `time_res / 8`.
    pub fn earliest_intercept(&self, field: &Field, t0: f64, w: &TargetWindow) -> Option<f64> {
        let lo = t0.max(w.window.lo);
        if lo > w.window.hi {
            return None;
        }
        let slack = |t: f64| t - t0 - self.distance(field, &w.position(t)) / self.v_max;
        if w.speed() == 0.0 {
            let t = lo.max(t0 + self.distance(field, &w.start) / self.v_max);
            return (t <= w.window.hi).then_some(t);
        }
        if slack(lo) >= 0.0 {
            return Some(lo);
        }
        let hi = w.window.hi;
        if slack(hi) < 0.0 {
            return None;
        }
        let (mut a, mut b) = (lo, hi);
        while b - a > self.time_res / 8.0 {
            let mid = 0.5 * (a + b);
            if slack(mid) >= 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        Some(b)
    }
}

struct Enumerator<'a> {
    oracle: &'a Oracle,
    windows: &'a [TargetWindow],
    m: usize,
    tours: Vec<OracleTour>,
}

impl Enumerator<'_> {
    fn visit(&mut self, prefix: &mut Vec<WindowId>, used: u64, state: Option<(Vec3, f64)>) {
        let field = state.map(|(p, _)| self.oracle.field(p));
        if used.count_ones() as usize == self.m + 1 {
            let depot = &self.windows[0];
            let t_f = match (&field, state) {
                (Some(f), Some((_, t))) => self.oracle.earliest_intercept(f, t, depot).unwrap_or(f64::INFINITY),
                _ => f64::INFINITY,
            };
            let mut windows = prefix.clone();
            windows.push(WindowId(0));
            self.tours.push(OracleTour { windows, t_f });
            return;
        }
        for w in &self.windows[1..] {
            if used & (1 << w.target) != 0 {
                continue;
            }
            let next = match (&field, state) {
                (Some(f), Some((_, t))) => self.oracle.earliest_intercept(f, t, w).map(|t| (w.position(t), t)),
                _ => None,
            };
            prefix.push(w.id);
            self.visit(prefix, used | (1 << w.target), next);
            prefix.pop();
        }
    }
}

/// Evaluates every tour (each target order times each window choice).
pub fn oracle_solve(instance: &Instance, space_res: f64, time_res: f64) -> Result<OracleResult, OracleError> {
    oracle_solve_limited(instance, space_res, time_res, DEFAULT_TOUR_LIMIT)
}

pub fn oracle_solve_limited(
    instance: &Instance,
    space_res: f64,
    time_res: f64,
    limit: u128,
) -> Result<OracleResult, OracleError> {
    let m = instance.targets.len();
    let count = (1..=m as u128).product::<u128>() * instance.targets.iter().map(|t| t.windows.len() as u128).product::<u128>();
    if count > limit {
        return Err(OracleError::BudgetExceeded { count, limit });
    }
    let windows = instance.target_windows().map_err(|e| OracleError::Instance(e.to_string()))?;
    let oracle = Oracle::new(instance, space_res, time_res)?;
    let mut e = Enumerator { oracle: &oracle, windows: &windows, m, tours: Vec::new() };
    e.visit(&mut vec![WindowId(0)], 1, Some((instance.depot, 0.0)));
    let t_f = e.tours.iter().map(|t| t.t_f).fold(f64::INFINITY, f64::min);
    Ok(OracleResult { t_f, tours: e.tours, step: space_res / instance.v_max + time_res })
}
