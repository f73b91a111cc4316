//! Finding, refining, classifying and certifying fixed points of the Hopfield map.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cips::{margin, CipsVerdict};
use crate::error::{Error, Result};
use crate::geometry::{
    mixture_distance, project_to_hull, sample_simplex_weights, sample_thickened_facet, FaceSpec, FacetChoice,
    ThickenedRegion,
};
use crate::map::{
    jacobian_from_weights, map_unchecked, second_moment_quadratic, softmax_into, spectral_radius, Beta, PatternSet,
    SimplexVector, SymMatrix,
};
use crate::seed::derive_seed;
use crate::tol;

/// Weight threshold for membership in a record's face hint.
pub const FACE_HINT_WEIGHT: f64 = 0.05;

/// An orbit of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Visited points, starting with `x0`; only the endpoints unless the full path was requested.
    pub points: Vec<DVector<f64>>,
    pub converged: bool,
    pub steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &DVector<f64> {
        self.points.last().expect("trajectory is never empty")
    }
}

/// Iterates `f` until successive points are closer than `tol` or `max_iter` steps are spent.
pub fn iterate_map(
    patterns: &PatternSet,
    beta: Beta,
    x0: &DVector<f64>,
    max_iter: usize,
    tol: f64,
    keep_path: bool,
) -> Result<Trajectory> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument("need tol > 0 and max_iter >= 1".into()));
    }
    if x0.len() != patterns.dim() {
        return Err(Error::InvalidArgument("x0 has the wrong dimension".into()));
    }
    let mut points = vec![x0.clone()];
    let mut x = x0.clone();
    for step in 0..max_iter {
        let (next, _) = map_unchecked(patterns, beta.value(), &x);
        let moved = (&next - &x).norm();
        if moved < tol {
            points.push(x);
            return Ok(Trajectory { points, converged: true, steps: step });
        }
        x = next;
        if keep_path {
            points.push(x.clone());
        }
    }
    if !keep_path {
        points.push(x);
    }
    Ok(Trajectory { points, converged: false, steps: max_iter })
}

/// Stability class by spectral radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

/// Stable below `1 - 1e-8`, unstable above `1 + 1e-8`, marginal in between.
pub fn classify(spectral_radius: f64) -> Classification {
    if spectral_radius < 1.0 - tol::MARGINAL_BAND {
        Classification::Stable
    } else if spectral_radius > 1.0 + tol::MARGINAL_BAND {
        Classification::Unstable
    } else {
        Classification::Marginal
    }
}

/// A verified fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub location: Vec<f64>,
    pub residual: f64,
    pub spectral_radius: f64,
    pub classification: Classification,
    /// Index of and distance to the closest pattern.
    pub nearest_pattern: (usize, f64),
    /// Patterns carrying softmax weight at least 0.05.
    pub face_hint: Option<Vec<usize>>,
    /// Softmax weights at the fixed point.
    pub weights: Vec<f64>,
    pub beta: f64,
}

impl FixedPointRecord {
    pub fn location(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.location)
    }

    fn build(patterns: &PatternSet, beta: f64, x: DVector<f64>, residual: f64) -> Result<Self> {
        let (_, p) = map_unchecked(patterns, beta, &x);
        let jac = SymMatrix::new(jacobian_from_weights(patterns, beta, &p))?;
        let rho = spectral_radius(&jac);
        let hint: Vec<usize> = (0..p.len()).filter(|&j| p[j] >= FACE_HINT_WEIGHT).collect();
        Ok(Self {
            nearest_pattern: patterns.nearest(&x),
            location: x.iter().copied().collect(),
            residual,
            spectral_radius: rho,
            classification: classify(rho),
            face_hint: (!hint.is_empty()).then_some(hint),
            weights: p,
            beta,
        })
    }
}

fn residual_of(patterns: &PatternSet, beta: f64, x: &DVector<f64>) -> f64 {
    (map_unchecked(patterns, beta, x).0 - x).norm()
}

/// Damped Newton steps on `f(x) - x`; `None` signals a singular system.
fn newton_phase(patterns: &PatternSet, beta: f64, x: &mut DVector<f64>, r: &mut f64) -> Option<()> {
    let d = x.len();
    for _ in 0..50 {
        if *r < tol::NEWTON_TARGET {
            return Some(());
        }
        let (fx, p) = map_unchecked(patterns, beta, x);
        let g = fx - &*x;
        let m = jacobian_from_weights(patterns, beta, &p) - DMatrix::identity(d, d);
        let lu = m.lu();
        let u = lu.u();
        if (0..d).any(|i| u[(i, i)].abs() < tol::SINGULAR_PIVOT) {
            return None;
        }
        let delta = lu.solve(&(-g))?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &*x + &delta * t;
            let rc = residual_of(patterns, beta, &cand);
            if rc < *r {
                *x = cand;
                *r = rc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            return Some(());
        }
    }
    Some(())
}

/// Refines a seed to a fixed point and classifies it.
pub fn refine_newton(patterns: &PatternSet, beta: Beta, x0: &DVector<f64>) -> Result<FixedPointRecord> {
    if x0.len() != patterns.dim() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("seed must be finite with the pattern dimension".into()));
    }
    let b = beta.value();
    let mut x = x0.clone();
    let mut r = residual_of(patterns, b, &x);
    for _round in 0..2 {
        if newton_phase(patterns, b, &mut x, &mut r).is_some() {
            break;
        }
        // Singular Newton system: fall back to plain iteration, then retry once.
        for _ in 0..200 {
            if r < tol::NEWTON_TARGET {
                break;
            }
            let (next, _) = map_unchecked(patterns, b, &x);
            let rn = residual_of(patterns, b, &next);
            x = next;
            r = rn;
        }
    }
    if r >= tol::ACCEPT_RESIDUAL {
        return Err(Error::RefinementFailed { best_residual: r });
    }
    FixedPointRecord::build(patterns, b, x, r)
}

/// Seeds for `find_fixed_points`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStrategy {
    pub vertices: bool,
    /// Faces up to this many vertices contribute pulled barycenters.
    pub max_face_size: usize,
    /// Pull factor toward the face: seed `b + pull (b_F - b)`.
    pub pull: f64,
    pub jitter_copies: usize,
    pub jitter: f64,
    /// Uniform random points of the hull.
    pub random_points: usize,
    pub seed: u64,
    /// Caller-provided seeds.
    #[serde(skip)]
    pub extra: Vec<DVector<f64>>,
}

impl Default for SearchStrategy {
    fn default() -> Self {
        Self {
            vertices: true,
            max_face_size: 4,
            pull: 0.9,
            jitter_copies: 10,
            jitter: 1e-3,
            random_points: 1000,
            seed: 0,
            extra: Vec::new(),
        }
    }
}

impl SearchStrategy {
    /// Only the caller's seeds.
    pub fn seeds_only(extra: Vec<DVector<f64>>) -> Self {
        Self { vertices: false, max_face_size: 0, random_points: 0, jitter_copies: 0, extra, ..Self::default() }
    }

    pub fn seeds(&self, patterns: &PatternSet) -> Vec<DVector<f64>> {
        let n = patterns.count();
        let w = patterns.matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = self.extra.clone();
        if self.vertices {
            out.extend((0..n).map(|j| patterns.column(j)));
        }
        let center = w.column_mean();
        for k in 1..=self.max_face_size.min(n) {
            for subset in crate::simplex::subsets(n, k) {
                let bf = w.select_columns(&subset).column_mean();
                let base = &center + (&bf - &center) * self.pull;
                for _ in 0..self.jitter_copies {
                    let noise = DVector::from_fn(base.len(), |_, _| rng.random_range(-1.0..1.0) * self.jitter);
                    out.push(&base + noise);
                }
                out.push(base);
            }
        }
        for _ in 0..self.random_points {
            out.push(w * DVector::from_vec(sample_simplex_weights(n, &mut rng)));
        }
        out
    }
}

/// Sorts records by location and drops those within `radius` of an earlier one.
pub fn dedup_records(mut records: Vec<FixedPointRecord>, radius: f64) -> Vec<FixedPointRecord> {
    records.sort_by(|a, b| {
        a.location
            .iter()
            .zip(&b.location)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<FixedPointRecord> = Vec::new();
    for rec in records {
        let close = kept.iter().any(|k| {
            k.location.iter().zip(&rec.location).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= radius
        });
        if !close {
            kept.push(rec);
        }
    }
    kept
}

/// Multi-start search: refine every seed, keep accepted records, deduplicate.
pub fn find_fixed_points(patterns: &PatternSet, beta: Beta, strategy: &SearchStrategy) -> Result<Vec<FixedPointRecord>> {
    let seeds = strategy.seeds(patterns);
    refine_all(patterns, beta, &seeds)
}

/// Refines the given seeds in parallel and deduplicates the accepted records.
pub fn refine_all(patterns: &PatternSet, beta: Beta, seeds: &[DVector<f64>]) -> Result<Vec<FixedPointRecord>> {
    let records: Vec<FixedPointRecord> = seeds
        .par_iter()
        .filter_map(|s| refine_newton(patterns, beta, s).ok())
        .collect();
    Ok(dedup_records(records, tol::DEDUP_RADIUS))
}

/// Number of records per face-hint size.
pub fn count_by_face_size(records: &[FixedPointRecord]) -> Vec<(usize, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for r in records {
        *counts.entry(r.face_hint.as_ref().map_or(0, Vec::len)).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

/// `2 (n - |J|) exp(beta (-delta(v) + 2 eps))`, the bound on `Dist(f(v + eps r), cv W_J)`.
pub fn contraction_bound(patterns: &PatternSet, j: &[usize], v: &DVector<f64>, eps: f64, beta: Beta) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} must be positive")));
    }
    let face = FaceSpec::new(patterns, j.to_vec())?;
    let dist = project_to_hull(v, &face)?.distance;
    if dist >= tol::ON_FACE {
        return Err(Error::InvalidArgument(format!("v is {dist:e} away from the face")));
    }
    let competitors = face.complement();
    if competitors.is_empty() {
        return Ok(0.0);
    }
    let delta = margin(patterns, face.indices(), &competitors, v)?;
    Ok(2.0 * competitors.len() as f64 * (beta.value() * (-delta + 2.0 * eps)).exp())
}

/// A Rayleigh-quotient witness of instability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityCertificate {
    pub direction: Vec<f64>,
    /// `u^T J u`.
    pub rayleigh: f64,
    pub pair: (usize, usize),
    pub p_weights: (f64, f64),
    /// The weight floor `a` used for `beta0` and the Rayleigh floor.
    pub a: f64,
    /// `max_{j != k} |w_j^T w_k|`.
    pub omega: f64,
    /// `4 / (a (1 - omega)^2)`.
    pub beta0: f64,
    /// `(beta / 4) a (1 - omega)^2`.
    pub rayleigh_floor: f64,
}

impl InstabilityCertificate {
    /// The direction proves instability when its Rayleigh quotient exceeds one.
    pub fn is_valid(&self) -> bool {
        self.rayleigh > 1.0
    }
}

/// Rayleigh certificate along the difference of the two most weighted patterns.
///
/// Applicable when the second-largest softmax weight is at least `a_threshold`;
/// the floor `a` is that observed weight.
pub fn instability_certificate(
    patterns: &PatternSet,
    beta: Beta,
    record: &FixedPointRecord,
    a_threshold: f64,
) -> Result<InstabilityCertificate> {
    if patterns.count() < 2 {
        return Err(Error::NotApplicable("a single pattern has no pair".into()));
    }
    let mut p = vec![0.0; patterns.count()];
    let scores = patterns.matrix().tr_mul(&record.location());
    softmax_into(scores.as_slice(), beta.value(), &mut p);
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let (j, k) = (order[0], order[1]);
    if p[k] < a_threshold {
        return Err(Error::NotApplicable(format!(
            "second-largest weight {:.3e} is below {a_threshold:.3e}",
            p[k]
        )));
    }
    let diff = patterns.column(j) - patterns.column(k);
    let u = &diff / diff.norm();
    let rayleigh = second_moment_quadratic(patterns, &SimplexVector::new(p.clone())?, beta, &u)?;
    let a = p[k];
    let omega = patterns.coherence();
    let gap = (1.0 - omega).powi(2);
    Ok(InstabilityCertificate {
        direction: u.iter().copied().collect(),
        rayleigh,
        pair: (j, k),
        p_weights: (p[j], p[k]),
        a,
        omega,
        beta0: 4.0 / (a * gap),
        rayleigh_floor: beta.value() / 4.0 * a * gap,
    })
}

/// Sampled Poincare-Miranda evidence for a region. Not a proof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirandaReport {
    pub indices: Vec<usize>,
    pub lambda: f64,
    pub epsilon: Option<f64>,
    pub beta: f64,
    pub samples_per_facet: usize,
    pub f0_pass: bool,
    pub f0_worst_slack: f64,
    pub f1_pass: bool,
    /// `None` when the region has no side facets.
    pub f1_worst_slack: Option<f64>,
    pub overall: bool,
}

/// Checks that `f` pushes the facets of `P_lambda` toward the matching facets of `P`,
/// with `W` consisting of the face's columns only.
pub fn miranda_verify_isolated(
    face_patterns: &PatternSet,
    beta: Beta,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<MirandaReport> {
    let k = face_patterns.count();
    let face = FaceSpec::simplicial(face_patterns, (0..k).collect())?;
    let region = ThickenedRegion::new(face, lambda, 1.0)?;
    let gram = face_patterns.gram();
    let b = beta.value();
    let floor = (1.0 - lambda) / k as f64;
    let mut worst = f64::INFINITY;
    let mut pass = true;
    let mut mu = vec![0.0; k];
    let mut scores = vec![0.0; k];
    let mut p = vec![0.0; k];
    'facets: for i in 0..k {
        let height = region.facet_height(i);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        for _ in 0..samples {
            let w = sample_simplex_weights(k - 1, &mut rng);
            // Barycentric coordinates of x = b + lambda (v' - b) with v' on facet i.
            let mut it = w.iter();
            for (a, m) in mu.iter_mut().enumerate() {
                let v = if a == i { 0.0 } else { *it.next().unwrap() };
                *m = lambda * v + floor;
            }
            for (a, s) in scores.iter_mut().enumerate() {
                *s = (0..k).map(|c| gram[(a, c)] * mu[c]).sum();
            }
            softmax_into(&scores, b, &mut p);
            // The barycentric coordinates of f(x) are p; distances scale by the facet height.
            let slack = (floor - p[i]) * height;
            worst = worst.min(slack);
            if slack < 0.0 {
                pass = false;
                break 'facets;
            }
        }
    }
    Ok(MirandaReport {
        indices: (0..k).collect(),
        lambda,
        epsilon: None,
        beta: b,
        samples_per_facet: samples,
        f0_pass: pass,
        f0_worst_slack: worst,
        f1_pass: true,
        f1_worst_slack: None,
        overall: pass,
    })
}

/// Largest number of side facets enumerated individually.
pub const SIDE_FACET_ENUMERATION_LIMIT: usize = 64;

/// Samples both facet classes of `(P_lambda)^eps` and checks the attraction inequalities
/// `Dist(f(x), F) <= Dist(x, F)` on extruded facets and `Dist(f(x), P) <= Dist(x, P)` on side facets.
pub fn miranda_verify_thickened(
    patterns: &PatternSet,
    beta: Beta,
    face: &FaceSpec,
    lambda: f64,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<MirandaReport> {
    let region = ThickenedRegion::new(face.clone(), lambda, epsilon)?;
    let b = beta.value();
    let f0: Vec<f64> = (0..region.f0_count())
        .into_par_iter()
        .map(|omit| -> Result<f64> {
            let facet = face.facet(omit)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, omit as u64));
            let mut worst = f64::INFINITY;
            for _ in 0..samples {
                let s = sample_thickened_facet(&region, &FacetChoice::F0 { omit }, &mut rng)?;
                let (_, p) = map_unchecked(patterns, b, &s.x);
                worst = worst.min(s.distance - mixture_distance(&p, &facet)?);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let f0_worst = f0.into_iter().fold(f64::INFINITY, f64::min);
    let m = region.side_dim();
    let f1_worst = if m == 0 {
        None
    } else {
        let enumerate = m < 63 && (1usize << m) <= SIDE_FACET_ENUMERATION_LIMIT;
        let facets = if enumerate { 1usize << m } else { SIDE_FACET_ENUMERATION_LIMIT };
        let worst: Vec<f64> = (0..facets)
            .into_par_iter()
            .map(|id| -> Result<f64> {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, (1 << 32) + id as u64));
                let fixed = enumerate.then(|| FacetChoice::F1 { signs: (0..m).map(|bit| id >> bit & 1 == 1).collect() });
                let mut worst = f64::INFINITY;
                for _ in 0..samples {
                    let choice = fixed.clone().unwrap_or_else(|| region.random_side_facet(&mut rng));
                    let s = sample_thickened_facet(&region, &choice, &mut rng)?;
                    let (_, p) = map_unchecked(patterns, b, &s.x);
                    worst = worst.min(s.distance - mixture_distance(&p, face)?);
                }
                Ok(worst)
            })
            .collect::<Result<_>>()?;
        Some(worst.into_iter().fold(f64::INFINITY, f64::min))
    };
    let f0_pass = f0_worst >= 0.0;
    let f1_pass = f1_worst.is_none_or(|w| w >= 0.0);
    Ok(MirandaReport {
        indices: face.indices().to_vec(),
        lambda,
        epsilon: Some(epsilon),
        beta: b,
        samples_per_facet: samples,
        f0_pass,
        f0_worst_slack: f0_worst,
        f1_pass,
        f1_worst_slack: f1_worst,
        overall: f0_pass && f1_pass,
    })
}

/// Smallest `beta` of an ascending grid for which some `lambda` passes the isolated check.
pub fn beta_threshold_search(
    face_patterns: &PatternSet,
    beta_grid: &[f64],
    lambda_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Option<(f64, f64)>> {
    if beta_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("grids must be nonempty".into()));
    }
    if beta_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("beta grid must be ascending".into()));
    }
    for &b in beta_grid {
        for (li, &lambda) in lambda_grid.iter().enumerate() {
            let report = miranda_verify_isolated(face_patterns, Beta::new(b)?, lambda, samples, derive_seed(seed, li as u64))?;
            if report.overall {
                return Ok(Some((b, lambda)));
            }
        }
    }
    Ok(None)
}

/// Smallest `beta` with `2 c exp(beta (-delta + 2 mu)) < mu` for every `mu` in `[lo, hi]`.
///
/// Infinite when `delta <= 2 hi`.
pub fn beta_for_band(c: f64, delta: f64, lo: f64, hi: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    if delta <= 2.0 * hi {
        return f64::INFINITY;
    }
    let need = |mu: f64| ((2.0 * c / mu).ln() / (delta - 2.0 * mu)).max(0.0);
    let n = 4096;
    let mut best = need(lo).max(need(hi));
    let mut arg = lo;
    let ratio = (hi / lo).max(1.0);
    for i in 0..=n {
        let mu = lo * ratio.powf(i as f64 / n as f64);
        let v = need(mu);
        if v > best {
            best = v;
            arg = mu;
        }
    }
    // Golden-section polish around the grid maximum.
    let step = ratio.powf(1.0 / n as f64);
    let (mut a, mut b) = ((arg / step).max(lo), (arg * step).min(hi));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c1 = b - inv_phi * (b - a);
        let c2 = a + inv_phi * (b - a);
        if need(c1) > need(c2) {
            b = c2;
        } else {
            a = c1;
        }
    }
    best.max(need(0.5 * (a + b))) + 1e-6
}

/// Sufficient `beta` from the contraction bound, for the extruded facets only.
///
/// Uses `mu` in `[q (1 - lambda), sqrt(R^2 (1 - lambda)^2 + eps^2)]` with `q` the
/// inradius and `R` the circumradius of the face about its barycenter, and the
/// smallest estimated margin over the face and its facets.
pub fn sufficient_beta_facets(face: &FaceSpec, verdict: &CipsVerdict, lambda: f64, epsilon: f64) -> Result<f64> {
    let delta = verdict.delta_min();
    if !(delta > 0.0) {
        return Err(Error::CipsViolation { indices: face.indices().to_vec(), margin: delta });
    }
    // Any positive thickness gives the same in-span geometry.
    let region = ThickenedRegion::new(face.clone(), lambda, epsilon.max(f64::MIN_POSITIVE))?;
    let lo = region.inradius() * (1.0 - lambda);
    let hi = (region.circumradius().powi(2) * (1.0 - lambda).powi(2) + epsilon * epsilon).sqrt();
    let c = (face.patterns().count() + 1 - face.len()) as f64;
    Ok(beta_for_band(c, delta, lo, hi))
}

/// Sufficient `beta` for both facet classes of `(P_lambda)^eps`.
pub fn sufficient_beta_lemma3(face: &FaceSpec, verdict: &CipsVerdict, lambda: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    let delta_j = verdict.face.delta_min;
    if !(verdict.delta_min() > 0.0) {
        return Err(Error::CipsViolation { indices: face.indices().to_vec(), margin: verdict.delta_min() });
    }
    if delta_j <= 2.0 * epsilon {
        return Err(Error::EpsilonTooLarge { epsilon, margin: delta_j });
    }
    let facets = sufficient_beta_facets(face, verdict, lambda, epsilon)?;
    let d = face.patterns().dim() as f64;
    let c = (face.patterns().count() - face.len()) as f64;
    let side = beta_for_band(c, delta_j, epsilon / d.sqrt(), epsilon);
    Ok(facets.max(side))
}
