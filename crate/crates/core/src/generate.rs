//! Seeded random instances.
//!
//! Obstacles are random axis-aligned blocks of cells. Each target gets its
//! windows in order, separated by random gaps; inside a window it moves on a
//! straight leg from a random free point at a random speed below `v_max`,
//! and between windows it travels straight to the next leg's start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::geometry::{segment_covered, Aabb, Vec3};
use crate::instance::{GridFile, InstanceFile, TargetFile, FORMAT_VERSION};
use crate::world::{decompose_free_space, GridMap};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub cell_size: f64,
    pub obstacle_blocks: usize,
    /// Largest block extent in cells along each axis.
    pub max_block: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub seed: u64,
    pub n_targets: usize,
    pub windows_per_target: usize,
    /// Total window length of each target.
    pub sum_window_len: f64,
    pub grid: GridSpec,
    pub v_max: f64,
    /// Target speed inside windows is drawn from `[0, speed_frac · v_max]`.
    pub speed_frac: f64,
    /// Gaps before and between windows are drawn from `[0, max_gap]`.
    pub max_gap: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_targets: 3,
            windows_per_target: 2,
            sum_window_len: 6.0,
            grid: GridSpec { dims: [10, 10, 10], cell_size: 1.0, obstacle_blocks: 1, max_block: [4, 4, 4] },
            v_max: 1.0,
            speed_frac: 0.5,
            max_gap: 10.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("invalid generator parameter: {0}")]
    BadParameter(&'static str),
    #[error("generation failed after {0} attempts")]
    GenerationFailed(usize),
}

const RETRIES: usize = 1000;

fn check(p: &GeneratorParams) -> Result<(), GenerateError> {
    let bad = GenerateError::BadParameter;
    if p.grid.dims.contains(&0) {
        return Err(bad("grid dims must be positive"));
    }
    if !(p.grid.cell_size > 0.0) {
        return Err(bad("cell_size must be positive"));
    }
    if p.n_targets > crate::instance::MAX_TARGETS {
        return Err(bad("too many targets"));
    }
    if p.windows_per_target == 0 {
        return Err(bad("windows_per_target must be positive"));
    }
    if !(p.sum_window_len > 0.0 && p.sum_window_len.is_finite()) {
        return Err(bad("sum_window_len must be positive"));
    }
    if !(p.v_max > 0.0 && p.v_max.is_finite()) {
        return Err(bad("v_max must be positive"));
    }
    if !(0.0..=1.0).contains(&p.speed_frac) {
        return Err(bad("speed_frac must lie in [0, 1]"));
    }
    if !(p.max_gap >= 0.0 && p.max_gap.is_finite()) {
        return Err(bad("max_gap must be nonnegative"));
    }
    Ok(())
}

fn blocks(rng: &mut ChaCha8Rng, spec: &GridSpec) -> Vec<[usize; 3]> {
    let mut cells = Vec::new();
    for _ in 0..spec.obstacle_blocks {
        let ext: [usize; 3] = std::array::from_fn(|a| rng.random_range(1..=spec.max_block[a].clamp(1, spec.dims[a])));
        let lo: [usize; 3] = std::array::from_fn(|a| rng.random_range(0..=spec.dims[a] - ext[a]));
        for i in lo[0]..lo[0] + ext[0] {
            for j in lo[1]..lo[1] + ext[1] {
                for k in lo[2]..lo[2] + ext[2] {
                    cells.push([i, j, k]);
                }
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    cells
}

fn free_point(rng: &mut ChaCha8Rng, boxes: &[Aabb]) -> Vec3 {
    // Volume-weighted box choice; overlaps only skew the distribution.
    let volumes: Vec<f64> = boxes.iter().map(|b| (b.hi - b.lo).product()).collect();
    let mut pick = rng.random::<f64>() * volumes.iter().sum::<f64>();
    let b = boxes
        .iter()
        .zip(&volumes)
        .find(|(_, v)| {
            pick -= **v;
            pick <= 0.0
        })
        .map_or(&boxes[boxes.len() - 1], |(b, _)| b);
    Vec3::from_fn(|a, _| b.lo[a] + rng.random::<f64>() * (b.hi[a] - b.lo[a]))
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..=1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Dirichlet(1, …, 1) split of `total`; the parts sum to `total` up to rounding.
fn split(rng: &mut ChaCha8Rng, total: f64, parts: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..parts).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = draws.iter().sum();
    let mut out: Vec<f64> = draws.iter().map(|d| total * d / sum).collect();
    let head: f64 = out[..parts - 1].iter().sum();
    out[parts - 1] = total - head;
    out
}

fn target(rng: &mut ChaCha8Rng, p: &GeneratorParams, boxes: &[Aabb]) -> Result<TargetFile, GenerateError> {
    let lengths = split(rng, p.sum_window_len, p.windows_per_target);
    let mut waypoints: Vec<[f64; 4]> = Vec::new();
    let mut windows = Vec::new();
    let mut t = 0.0;
    for len in lengths {
        let gap = rng.random::<f64>() * p.max_gap;
        // Without a gap the next leg has to continue from where the last one ended.
        let chained = (gap <= 0.0).then(|| waypoints.last().map(|w: &[f64; 4]| Vec3::new(w[1], w[2], w[3]))).flatten();
        t += gap;
        let (a, b) = (0..RETRIES)
            .find_map(|_| {
                let a = chained.unwrap_or_else(|| free_point(rng, boxes));
                let speed = rng.random::<f64>() * p.speed_frac * p.v_max;
                let b = a + unit_vector(rng) * (speed * len);
                segment_covered(boxes, &a, &b, 0.0).then_some((a, b))
            })
            .ok_or(GenerateError::GenerationFailed(RETRIES))?;
        if chained.is_none() {
            waypoints.push([t, a.x, a.y, a.z]);
        }
        waypoints.push([t + len, b.x, b.y, b.z]);
        windows.push((t, Some(t + len)));
        t += len;
    }
    Ok(TargetFile { waypoints, windows })
}

/// Deterministic in `params.seed`.
pub fn generate_instance(params: &GeneratorParams) -> Result<InstanceFile, GenerateError> {
    check(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let spec = &params.grid;
    for _ in 0..RETRIES {
        let blocked = blocks(&mut rng, spec);
        let map = GridMap::new(spec.dims, spec.cell_size, Vec3::zeros(), &blocked).expect("blocks lie in the grid");
        let free: Vec<[usize; 3]> = map.cells().filter(|c| !map.is_blocked(*c)).collect();
        if free.is_empty() {
            continue;
        }
        let depot = map.cell_center(free[rng.random_range(0..free.len())]);
        let boxes = decompose_free_space(&map);
        let targets = (0..params.n_targets).map(|_| target(&mut rng, params, &boxes)).collect::<Result<Vec<_>, _>>()?;
        return Ok(InstanceFile {
            format_version: FORMAT_VERSION,
            grid: GridFile { dims: spec.dims, cell_size: spec.cell_size, origin: [0.0; 3], blocked },
            depot: depot.into(),
            v_max: params.v_max,
            targets,
        });
    }
    Err(GenerateError::GenerationFailed(RETRIES))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Instance;

    #[test]
    fn deterministic() {
        let p = GeneratorParams { seed: 7, ..GeneratorParams::default() };
        assert_eq!(generate_instance(&p).unwrap().to_json(), generate_instance(&p).unwrap().to_json());
        let q = GeneratorParams { seed: 8, ..p.clone() };
        assert_ne!(generate_instance(&p).unwrap(), generate_instance(&q).unwrap());
    }

    #[test]
    fn window_lengths_sum() {
        let p = GeneratorParams { seed: 3, n_targets: 10, sum_window_len: 6.0, ..GeneratorParams::default() };
        let f = generate_instance(&p).unwrap();
        assert_eq!(f.targets.len(), 10);
        for t in &f.targets {
            assert_eq!(t.windows.len(), 2);
            let total: f64 = t.windows.iter().map(|(lo, hi)| hi.unwrap() - lo).sum();
            assert!((total - 6.0).abs() <= 1e-9, "{total}");
        }
    }

    #[test]
    fn generated_instances_load() {
        for seed in 0..20 {
            let p = GeneratorParams { seed, ..GeneratorParams::default() };
            let f = generate_instance(&p).unwrap();
            Instance::from_file(&f).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }

    #[test]
    fn back_to_back_windows() {
        let p = GeneratorParams { seed: 5, max_gap: 0.0, windows_per_target: 3, ..GeneratorParams::default() };
        let f = generate_instance(&p).unwrap();
        assert_eq!(f.targets[0].waypoints.len(), 4);
        Instance::from_file(&f).unwrap();
    }

    #[test]
    fn bad_parameters() {
        let p = GeneratorParams { windows_per_target: 0, ..GeneratorParams::default() };
        assert!(matches!(generate_instance(&p), Err(GenerateError::BadParameter(_))));
    }
}
