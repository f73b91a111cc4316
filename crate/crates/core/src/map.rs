//! The continuous Hopfield map `f(x) = W softmax_beta(W^T x)`, its Jacobian
//! and spectral radius evaluation.
//!
//! Everything here is a pure function of its inputs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// Stored memories: `n` unit-norm, pairwise distinct columns in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    columns: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl PatternSet {
    /// Wraps a `d x n` matrix whose columns already have unit norm.
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let (d, n) = columns.shape();
        if d < 1 || n < 2 {
            return Err(Error::InvalidArgument(format!(
                "pattern set needs d >= 1 and n >= 2, got d = {d}, n = {n}"
            )));
        }
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite pattern entry".into()));
        }
        for (j, col) in columns.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > tol::UNIT_NORM {
                return Err(Error::InvalidArgument(format!(
                    "pattern {j} has norm {norm}, expected 1"
                )));
            }
        }
        for j in 0..n {
            for k in (j + 1)..n {
                let gap = (columns.column(j) - columns.column(k)).norm();
                if gap <= tol::DISTINCT_PATTERNS {
                    return Err(Error::InvalidArgument(format!(
                        "patterns {j} and {k} coincide (distance {gap:e})"
                    )));
                }
            }
        }
        let gram = columns.transpose() * &columns;
        Ok(Self { columns, gram })
    }

    /// Normalizes every column to unit length, then validates.
    pub fn normalized(mut columns: DMatrix<f64>) -> Result<Self> {
        for mut col in columns.column_iter_mut() {
            let norm = col.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::InvalidArgument("zero or non-finite pattern".into()));
            }
            col /= norm;
        }
        Self::new(columns)
    }

    /// Builds a pattern set from a list of column vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let d = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != d) {
            return Err(Error::InvalidArgument("ragged pattern columns".into()));
        }
        let m = DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]);
        Self::new(m)
    }

    /// The standard basis `e_1, ..., e_n` of `R^n`, for which `f` is the softmax.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    /// The two-dimensional demo set `(e1, -e1, e2, -e2)`.
    pub fn cross_2d() -> Self {
        Self::from_columns(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .expect("demo patterns are valid")
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn count(&self) -> usize {
        self.columns.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Gram matrix `W^T W`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.columns.column(j).into_owned()
    }

    /// Pattern set made of the listed columns only.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.count()) {
            return Err(Error::InvalidArgument(format!("index {bad} out of range")));
        }
        Self::new(self.columns.select_columns(indices))
    }

    /// `max_{j != k} |w_j^T w_k|`.
    pub fn coherence(&self) -> f64 {
        let n = self.count();
        let mut omega = 0.0_f64;
        for j in 0..n {
            for k in (j + 1)..n {
                omega = omega.max(self.gram[(j, k)].abs());
            }
        }
        omega
    }

    /// Index and distance of the pattern closest to `x`.
    pub fn nearest(&self, x: &DVector<f64>) -> (usize, f64) {
        self.columns
            .column_iter()
            .map(|c| (c - x).norm())
            .enumerate()
            .fold((0, f64::INFINITY), |best, (j, dist)| if dist < best.1 { (j, dist) } else { best })
    }
}

/// Inverse temperature of the softmax.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Beta(f64);

impl Beta {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!("beta must be positive and finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A point of the standard simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("empty simplex vector".into()));
        }
        if entries.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("simplex entries must be finite and nonnegative".into()));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > tol::SIMPLEX_SUM {
            return Err(Error::InvalidArgument(format!("simplex entries sum to {sum}")));
        }
        Ok(Self(entries))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A symmetric `d x d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument("matrix is not square".into()));
        }
        let asym = (&m - m.transpose()).amax();
        if asym.is_nan() || asym > tol::SYMMETRY {
            return Err(Error::InvalidArgument(format!("matrix is not symmetric (max |M - M^T| = {asym:e})")));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `u^T M u`.
    pub fn quadratic_form(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.0 * u))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Max-shifted scaled softmax.
pub fn softmax(z: &[f64], beta: Beta) -> Result<SimplexVector> {
    if z.is_empty() || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("softmax input must be nonempty and finite".into()));
    }
    let mut out = vec![0.0; z.len()];
    softmax_into(z, beta.value(), &mut out);
    Ok(SimplexVector(out))
}

pub(crate) fn softmax_into(z: &[f64], beta: f64, out: &mut [f64]) {
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (beta * (v - zmax)).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn check_point(patterns: &PatternSet, x: &DVector<f64>) -> Result<()> {
    if x.len() != patterns.dim() {
        return Err(Error::InvalidArgument(format!(
            "point has dimension {}, patterns live in R^{}",
            x.len(),
            patterns.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("point has non-finite entries".into()));
    }
    Ok(())
}

/// Softmax weights `p = softmax_beta(W^T x)` without validation.
pub(crate) fn weights_unchecked(patterns: &PatternSet, beta: f64, x: &DVector<f64>) -> Vec<f64> {
    let scores = patterns.matrix().tr_mul(x);
    let mut p = vec![0.0; scores.len()];
    softmax_into(scores.as_slice(), beta, &mut p);
    p
}

/// `f(x)` together with its softmax weights, without validation.
pub(crate) fn map_unchecked(patterns: &PatternSet, beta: f64, x: &DVector<f64>) -> (DVector<f64>, Vec<f64>) {
    let p = weights_unchecked(patterns, beta, x);
    let fx = patterns.matrix() * DVector::from_column_slice(&p);
    (fx, p)
}

/// Softmax weights `softmax_beta(W^T x)` attached to the point `x`.
pub fn attention_weights(patterns: &PatternSet, beta: Beta, x: &DVector<f64>) -> Result<SimplexVector> {
    check_point(patterns, x)?;
    Ok(SimplexVector(weights_unchecked(patterns, beta.value(), x)))
}

/// The continuous Hopfield map `f(x) = W softmax_beta(W^T x)`.
pub fn hopfield_map(patterns: &PatternSet, beta: Beta, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_point(patterns, x)?;
    Ok(map_unchecked(patterns, beta.value(), x).0)
}

/// `beta * W (D(p) - p p^T) W^T` for given simplex weights `p`.
pub(crate) fn jacobian_from_weights(patterns: &PatternSet, beta: f64, p: &[f64]) -> DMatrix<f64> {
    let w = patterns.matrix();
    let pv = DVector::from_column_slice(p);
    let mu = w * &pv;
    let mut scaled = w.clone();
    for (mut col, &pj) in scaled.column_iter_mut().zip(p) {
        col *= pj;
    }
    let mut m = scaled * w.transpose();
    m -= &mu * mu.transpose();
    m *= beta;
    let sym = (&m + m.transpose()) * 0.5;
    sym
}

/// Jacobian of the Hopfield map at `x`.
pub fn jacobian(patterns: &PatternSet, beta: Beta, x: &DVector<f64>) -> Result<SymMatrix> {
    check_point(patterns, x)?;
    let p = weights_unchecked(patterns, beta.value(), x);
    Ok(SymMatrix(jacobian_from_weights(patterns, beta.value(), &p)))
}

/// `beta * sum_i p_i ((w_i - mu)^T u)^2` with `mu = W p`.
///
/// This is the second-moment form of `u^T J u`; it is computed from the
/// patterns directly rather than through the Jacobian matrix.
pub fn second_moment_quadratic(
    patterns: &PatternSet,
    p: &SimplexVector,
    beta: Beta,
    u: &DVector<f64>,
) -> Result<f64> {
    if p.len() != patterns.count() || u.len() != patterns.dim() {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    if (u.norm() - 1.0).abs() > tol::UNIT_DIRECTION {
        return Err(Error::InvalidArgument(format!("direction has norm {}, expected 1", u.norm())));
    }
    let proj = patterns.matrix().tr_mul(u);
    let mean_proj: f64 = proj.iter().zip(p.as_slice()).map(|(a, b)| a * b).sum();
    let var: f64 = proj
        .iter()
        .zip(p.as_slice())
        .map(|(a, &pi)| pi * (a - mean_proj).powi(2))
        .sum();
    Ok(beta.value() * var)
}

/// Largest dimension handled by the dense symmetric eigensolver.
pub const DENSE_EIGEN_LIMIT: usize = 64;

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_radius(m: &SymMatrix) -> f64 {
    let a = m.matrix();
    if a.nrows() == 0 {
        return 0.0;
    }
    if a.nrows() <= DENSE_EIGEN_LIMIT {
        return SymmetricEigen::new(a.clone()).eigenvalues.amax();
    }
    match power_extremes(a) {
        Some((lo, hi)) => lo.abs().max(hi.abs()),
        None => SymmetricEigen::new(a.clone()).eigenvalues.amax(),
    }
}

/// Extreme eigenvalues by shifted power iteration with a residual certificate
/// `|M v - theta v| <= 1e-9 |M|`. Returns `None` if either run stalls.
fn power_extremes(a: &DMatrix<f64>) -> Option<(f64, f64)> {
    let scale = a.norm();
    if scale == 0.0 {
        return Some((0.0, 0.0));
    }
    let n = a.nrows();
    let shift = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let run = |sign: f64| -> Option<f64> {
        // Power iteration on shift*I + sign*A, which is positive semidefinite.
        let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_7).fract());
        v /= v.norm();
        for _ in 0..20_000 {
            let av = a * &v;
            let theta = v.dot(&av);
            let resid = (&av - &v * theta).norm();
            if resid <= 1e-9 * scale {
                return Some(theta);
            }
            let mut next = &v * shift + av * sign;
            let norm = next.norm();
            if norm == 0.0 {
                return Some(theta);
            }
            next /= norm;
            v = next;
        }
        None
    };
    let hi = run(1.0)?;
    let lo = run(-1.0)?;
    Some((lo, hi))
}
