//! Convexly-inner-product-separated (CIPS) faces.
//!
//! For `v` in `cv{w_j : j in J}` the margin is
//! `tau_1(v) - tau_2(v) = max_{j in J} w_j^T v - max_{j in J0} w_j^T v`,
//! and `J` is CIPS when the margin is positive on the whole face.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_simplex_weights, FaceSpec};
use crate::map::PatternSet;
use crate::seed::derive_seed;

/// Default CIPS threshold on the estimated minimum margin.
pub const DEFAULT_THRESHOLD: f64 = 1e-10;

fn check_sets(n: usize, j: &[usize], j0: &[usize]) -> Result<()> {
    if j.is_empty() {
        return Err(Error::InvalidArgument("J must be nonempty".into()));
    }
    if j.iter().chain(j0).any(|&i| i >= n) {
        return Err(Error::InvalidArgument(format!("indices must be below {n}")));
    }
    if j.iter().any(|i| j0.contains(i)) {
        return Err(Error::InvalidArgument(format!("J = {j:?} and J0 = {j0:?} overlap")));
    }
    Ok(())
}

/// `tau_1(v) - tau_2(v)`; `+inf` when `J0` is empty.
pub fn margin(patterns: &PatternSet, j: &[usize], j0: &[usize], v: &DVector<f64>) -> Result<f64> {
    check_sets(patterns.count(), j, j0)?;
    if v.len() != patterns.dim() {
        return Err(Error::InvalidArgument("v has the wrong dimension".into()));
    }
    let w = patterns.matrix();
    let score = |i: usize| w.column(i).dot(v);
    let tau1 = j.iter().map(|&i| score(i)).fold(f64::NEG_INFINITY, f64::max);
    let tau2 = j0.iter().map(|&i| score(i)).fold(f64::NEG_INFINITY, f64::max);
    Ok(tau1 - tau2)
}

/// Margin at the face point with barycentric weights `lam`, via the Gram matrix.
fn margin_from_weights(patterns: &PatternSet, j: &[usize], j0: &[usize], lam: &[f64]) -> f64 {
    let g = patterns.gram();
    let score = |i: usize| j.iter().zip(lam).map(|(&col, &l)| g[(i, col)] * l).sum::<f64>();
    let tau1 = j.iter().map(|&i| score(i)).fold(f64::NEG_INFINITY, f64::max);
    let tau2 = j0.iter().map(|&i| score(i)).fold(f64::NEG_INFINITY, f64::max);
    tau1 - tau2
}

/// Monte-Carlo minimum margin over a face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginEstimate {
    pub indices: Vec<usize>,
    pub competitors: Vec<usize>,
    pub delta_min: f64,
    pub delta_median: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Minimum and median margin over `samples` uniform points of `cv{w_j : j in J}`
/// against `[n] \ J`.
pub fn estimate_delta(patterns: &PatternSet, j: &[usize], samples: usize, seed: u64) -> Result<MarginEstimate> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let face = FaceSpec::new(patterns, j.to_vec())?;
    let indices = face.indices().to_vec();
    let competitors = face.complement();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = (0..samples)
        .map(|_| {
            let lam = sample_simplex_weights(indices.len(), &mut rng);
            margin_from_weights(patterns, &indices, &competitors, &lam)
        })
        .collect();
    let delta_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    let delta_median = if values.len() % 2 == 1 { values[mid] } else { 0.5 * (values[mid - 1] + values[mid]) };
    Ok(MarginEstimate { indices, competitors, delta_min, delta_median, samples, seed })
}

/// CIPS verdict for a face and all of its facets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CipsVerdict {
    pub indices: Vec<usize>,
    pub passed: bool,
    pub threshold: f64,
    pub face: MarginEstimate,
    pub facets: Vec<MarginEstimate>,
}

impl CipsVerdict {
    /// Smallest estimated margin over the face and its facets.
    pub fn delta_min(&self) -> f64 {
        self.facets.iter().map(|e| e.delta_min).fold(self.face.delta_min, f64::min)
    }

    /// Smallest estimated margin over the facets only.
    pub fn facet_delta_min(&self) -> f64 {
        self.facets.iter().map(|e| e.delta_min).fold(f64::INFINITY, f64::min)
    }
}

/// Runs `estimate_delta` on `J` and each `(|J|-1)`-subset; passes when every minimum exceeds `threshold`.
pub fn cips_check(patterns: &PatternSet, j: &[usize], threshold: f64, samples: usize, seed: u64) -> Result<CipsVerdict> {
    let face = FaceSpec::new(patterns, j.to_vec())?;
    if !face.is_simplicial() {
        return Err(Error::Unsupported(format!("face {:?} is not simplicial", face.indices())));
    }
    let face_est = estimate_delta(patterns, face.indices(), samples, derive_seed(seed, 0))?;
    let facets = face.facets();
    let facets: Vec<MarginEstimate> = facets
        .par_iter()
        .enumerate()
        .map(|(i, f)| estimate_delta(patterns, f.indices(), samples, derive_seed(seed, i as u64 + 1)))
        .collect::<Result<_>>()?;
    let passed = face_est.delta_min > threshold && facets.iter().all(|e| e.delta_min > threshold);
    Ok(CipsVerdict { indices: face.indices().to_vec(), passed, threshold, face: face_est, facets })
}

/// Minimum margin over the barycentric grid with `grid_per_dim` steps per edge.
pub fn delta_refine(patterns: &PatternSet, j: &[usize], grid_per_dim: usize) -> Result<f64> {
    let face = FaceSpec::new(patterns, j.to_vec())?;
    let k = face.len();
    if k > 4 {
        return Err(Error::Unsupported(format!("grid refinement needs |J| <= 4, got {k}")));
    }
    if grid_per_dim == 0 {
        return Err(Error::InvalidArgument("grid_per_dim must be positive".into()));
    }
    let indices = face.indices().to_vec();
    let competitors = face.complement();
    let g = grid_per_dim;
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; k];
    // Enumerate compositions of g into k nonnegative parts.
    fn walk(pos: usize, left: usize, counts: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            visit(counts);
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            walk(pos + 1, left - c, counts, visit);
        }
    }
    let mut lam = vec![0.0; k];
    walk(0, g, &mut counts, &mut |c| {
        for (l, &ci) in lam.iter_mut().zip(c) {
            *l = ci as f64 / g as f64;
        }
        best = best.min(margin_from_weights(patterns, &indices, &competitors, &lam));
    });
    Ok(best)
}
