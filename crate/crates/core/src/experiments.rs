//! Seeded random models and experiment drivers.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cips::{cips_check, CipsVerdict};
use crate::error::{Error, Result};
use crate::fixpoint::{
    beta_threshold_search, find_fixed_points, iterate_map, sufficient_beta_facets, Classification, FixedPointRecord,
    SearchStrategy,
};
use crate::geometry::FaceSpec;
use crate::map::{Beta, PatternSet};
use crate::seed::derive_seed;

/// Placement of the singular values of a distorting transform in `[1, kappa]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Geometric,
}

/// Patterns from a linear map with condition number `kappa` applied to the standard basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortedBasis {
    pub n: usize,
    pub kappa: f64,
    pub spacing: Spacing,
    pub seed: u64,
    /// The transform `U diag(sigma) V^T` before column normalization.
    pub transform: DMatrix<f64>,
    pub patterns: PatternSet,
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix makes the draw Haar-distributed.
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}

impl DistortedBasis {
    /// Haar-random `U`, `V` and singular values spaced in `[1, kappa]`; columns are normalized.
    pub fn generate(n: usize, kappa: f64, spacing: Spacing, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("n = {n} < 2")));
        }
        if !(kappa >= 1.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa = {kappa} must be at least 1")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_orthogonal(n, &mut rng);
        let v = random_orthogonal(n, &mut rng);
        let sigma = DVector::from_fn(n, |i, _| {
            let t = i as f64 / (n - 1) as f64;
            match spacing {
                Spacing::Linear => 1.0 + (kappa - 1.0) * t,
                Spacing::Geometric => kappa.powf(t),
            }
        });
        let transform = &u * DMatrix::from_diagonal(&sigma) * v.transpose();
        let patterns = PatternSet::normalized(transform.clone())?;
        Ok(Self { n, kappa, spacing, seed, transform, patterns })
    }

    /// Condition number of the transform.
    pub fn condition_number(&self) -> f64 {
        let s = self.transform.clone().svd(false, false).singular_values;
        s.max() / s.min()
    }
}

/// Uniformly random `k`-subsets of `[n]`, sorted.
pub fn random_faces(n: usize, sizes: &[usize], per_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(sizes.len() * per_size);
    for &k in sizes {
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("face size {k} outside 1..={n}")));
        }
        for _ in 0..per_size {
            let mut idx = sample_indices(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            out.push(idx);
        }
    }
    Ok(out)
}

/// Protocol of the CIPS table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CipsTableConfig {
    pub n: usize,
    pub kappa: f64,
    pub face_sizes: Vec<usize>,
    pub faces_per_size: usize,
    pub samples: usize,
    pub threshold: f64,
    pub spacing: Spacing,
    pub seed: u64,
}

impl CipsTableConfig {
    pub fn new(n: usize, kappa: f64, seed: u64) -> Self {
        Self {
            n,
            kappa,
            face_sizes: vec![4, 7, 15],
            faces_per_size: 100,
            samples: 10_000,
            threshold: 1e-10,
            spacing: Spacing::Linear,
            seed,
        }
    }
}

/// One row of the CIPS table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CipsTableRow {
    pub n: usize,
    pub kappa: f64,
    /// Minimum estimated margin over all faces and facets.
    pub delta_min: f64,
    /// Median over faces of the smallest margin on the face and its facets.
    pub delta_median: f64,
    /// Fraction of faces passing together with their facets.
    pub rate: f64,
    pub faces: usize,
    pub passed: usize,
}

/// Runs the CIPS protocol and returns the row with every verdict.
///
/// Each face is drawn from its own distorted basis.
pub fn cips_table_row(config: &CipsTableConfig) -> Result<(CipsTableRow, Vec<CipsVerdict>)> {
    let faces = random_faces(config.n, &config.face_sizes, config.faces_per_size, derive_seed(config.seed, 1))?;
    let verdicts: Vec<CipsVerdict> = faces
        .par_iter()
        .enumerate()
        .map(|(i, face)| {
            let task = derive_seed(config.seed, 2 + i as u64);
            let basis = DistortedBasis::generate(config.n, config.kappa, config.spacing, task)?;
            cips_check(&basis.patterns, face, config.threshold, config.samples, derive_seed(task, 1))
        })
        .collect::<Result<_>>()?;
    let mut per_face: Vec<f64> = verdicts.iter().map(CipsVerdict::delta_min).collect();
    per_face.sort_by(f64::total_cmp);
    let mid = per_face.len() / 2;
    let delta_median =
        if per_face.len() % 2 == 1 { per_face[mid] } else { 0.5 * (per_face[mid - 1] + per_face[mid]) };
    let passed = verdicts.iter().filter(|v| v.passed).count();
    let row = CipsTableRow {
        n: config.n,
        kappa: config.kappa,
        delta_min: per_face[0],
        delta_median,
        rate: passed as f64 / verdicts.len() as f64,
        faces: verdicts.len(),
        passed,
    };
    Ok((row, verdicts))
}

/// Protocol of the beta search over isolated faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSearchConfig {
    pub n: usize,
    pub kappa: f64,
    pub face_sizes: Vec<usize>,
    pub faces_per_size: usize,
    pub beta_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// Points per facet in the outward-mapping check.
    pub samples: usize,
    /// Margin samples for the sufficient-beta bound.
    pub margin_samples: usize,
    pub spacing: Spacing,
    pub seed: u64,
}

impl BetaSearchConfig {
    pub fn new(n: usize, kappa: f64, seed: u64) -> Self {
        Self {
            n,
            kappa,
            face_sizes: vec![4, 7, 15],
            faces_per_size: 10,
            beta_grid: (2..=80).map(|i| i as f64 * 0.5).collect(),
            lambda_grid: vec![0.7, 0.8, 0.9, 0.95],
            samples: 10_000,
            margin_samples: 10_000,
            spacing: Spacing::Linear,
            seed,
        }
    }
}

/// Scaling factors near one at which the sufficient bound is also evaluated.
pub const SUFFICIENT_LAMBDAS: [f64; 7] = [0.97, 0.98, 0.99, 0.995, 0.998, 0.999, 0.9995];

/// Outcome of the beta search on one face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSearchRow {
    pub face_id: usize,
    pub k: usize,
    pub indices: Vec<usize>,
    /// Smallest passing `beta` and the `lambda` that passed.
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    /// Smallest sufficient `beta` from the contraction bound over the lambda grids.
    pub sufficient_beta: f64,
    pub sufficient_lambda: f64,
}

/// Runs the isolated-face beta search, one distorted basis per face.
pub fn beta_search(config: &BetaSearchConfig) -> Result<Vec<BetaSearchRow>> {
    let faces = random_faces(config.n, &config.face_sizes, config.faces_per_size, derive_seed(config.seed, 1))?;
    faces
        .par_iter()
        .enumerate()
        .map(|(i, idx)| {
            let task = derive_seed(config.seed, 2 + i as u64);
            let basis = DistortedBasis::generate(config.n, config.kappa, config.spacing, task)?;
            let task = derive_seed(task, 1);
            let iso = basis.patterns.restrict(idx)?;
            let found = beta_threshold_search(&iso, &config.beta_grid, &config.lambda_grid, config.samples, task)?;
            let all: Vec<usize> = (0..idx.len()).collect();
            let verdict = cips_check(&iso, &all, 0.0, config.margin_samples, derive_seed(task, 1))?;
            let face = FaceSpec::simplicial(&iso, all)?;
            let mut best = (f64::INFINITY, f64::NAN);
            for &lambda in config.lambda_grid.iter().chain(SUFFICIENT_LAMBDAS.iter()) {
                let b = match sufficient_beta_facets(&face, &verdict, lambda, 0.0) {
                    Ok(b) => b,
                    Err(Error::CipsViolation { .. }) => f64::INFINITY,
                    Err(e) => return Err(e),
                };
                if b < best.0 {
                    best = (b, lambda);
                }
            }
            Ok(BetaSearchRow {
                face_id: i,
                k: idx.len(),
                indices: idx.clone(),
                beta: found.map(|f| f.0),
                lambda: found.map(|f| f.1),
                sufficient_beta: best.0,
                sufficient_lambda: best.1,
            })
        })
        .collect()
}

/// Counts of records by class and by face-hint size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixpointSummary {
    pub total: usize,
    pub stable: usize,
    pub unstable: usize,
    pub marginal: usize,
    /// `(face size, count)`, where size is the number of patterns with weight at least 0.05.
    pub by_face_size: Vec<(usize, usize)>,
}

pub fn summarize(records: &[FixedPointRecord]) -> FixpointSummary {
    let count = |c| records.iter().filter(|r| r.classification == c).count();
    FixpointSummary {
        total: records.len(),
        stable: count(Classification::Stable),
        unstable: count(Classification::Unstable),
        marginal: count(Classification::Marginal),
        by_face_size: crate::fixpoint::count_by_face_size(records),
    }
}

/// Trajectory emitter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub beta: f64,
    pub points: usize,
    /// Iterations at which positions are recorded.
    pub snapshots: Vec<usize>,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { beta: 15.0, points: 3000, snapshots: vec![0, 1, 2, 4, 7], max_iter: 10_000, tol: 1e-10, seed: 0 }
    }
}

/// One sampled orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub id: usize,
    /// `(iteration, position)` at each requested snapshot.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub converged: bool,
    /// Index into the fixed-point records of the nearest record at the end of the orbit.
    pub basin: Option<usize>,
    pub basin_distance: f64,
}

/// Orbits of uniform points of `[-1, 1]^d` together with the fixed points they approach.
pub fn dynamics(patterns: &PatternSet, config: &DynamicsConfig) -> Result<(Vec<FixedPointRecord>, Vec<OrbitRecord>)> {
    let beta = Beta::new(config.beta)?;
    let records = find_fixed_points(patterns, beta, &SearchStrategy { seed: derive_seed(config.seed, 0), ..SearchStrategy::default() })?;
    let d = patterns.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let starts: Vec<DVector<f64>> = (0..config.points)
        .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0)))
        .collect();
    let horizon = config.snapshots.iter().copied().max().unwrap_or(0);
    let orbits = starts
        .par_iter()
        .enumerate()
        .map(|(id, x0)| -> Result<OrbitRecord> {
            let mut snapshots = Vec::with_capacity(config.snapshots.len());
            let mut x = x0.clone();
            for it in 0..=horizon {
                if config.snapshots.contains(&it) {
                    snapshots.push((it, x.iter().copied().collect()));
                }
                if it < horizon {
                    x = crate::map::hopfield_map(patterns, beta, &x)?;
                }
            }
            let t = iterate_map(patterns, beta, &x, config.max_iter, config.tol, false)?;
            let end = t.last();
            let nearest = records
                .iter()
                .enumerate()
                .map(|(i, r)| (i, (r.location() - end).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            Ok(OrbitRecord {
                id,
                snapshots,
                converged: t.converged,
                basin: nearest.map(|n| n.0),
                basin_distance: nearest.map_or(f64::INFINITY, |n| n.1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((records, orbits))
}
