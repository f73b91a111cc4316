//! Exact fixed-point structure of the scaled softmax on the standard simplex.
//!
//! Every fixed point of `S_beta` other than the center lies on a line
//! `L_J = { l_J(x) : x in [0, 1/k] }` whose points carry the value `x` on the
//! `k = |J|` coordinates in `J` and `z = (1 - kx)/(n - k)` elsewhere. On such a
//! line the fixed-point equation reduces to `beta = h_{n,k}(x)` with
//!
//! ```text
//! h_{n,k}(x) = log((1/x - k)/(n - k)) * (n - k)/(1 - n x) = log(z/x) / (z - x).
//! ```
//!
//! `h` diverges at both ends of `(0, 1/k)` and has a single interior minimum
//! `m(n,k)`, the bifurcation threshold above which the line carries two
//! fixed points. Points are tracked as `(x, z)` pairs so that coordinates
//! close to zero keep full relative precision.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{jacobian_from_weights, softmax_into, spectral_radius, Beta, PatternSet, SymMatrix};
use crate::tol;

/// Largest `n` for which the catalog lists its points explicitly.
pub const MATERIALIZE_LIMIT: usize = 20;

fn check_nk(n: usize, k: usize) -> Result<()> {
    if n < 2 || k < 1 || k > n / 2 {
        return Err(Error::Domain(format!("need n >= 2 and 1 <= k <= n/2, got n = {n}, k = {k}")));
    }
    Ok(())
}

/// `h` evaluated from both coordinates of a line point.
fn h_pair(n: usize, k: usize, x: f64, z: f64) -> f64 {
    let nf = n as f64;
    if (x - 1.0 / nf).abs() < tol::SERIES_RADIUS {
        // h = (1/x) * ln(1+t)/t with t = (1/x - n)/(n - k).
        let t = (1.0 - nf * x) / ((nf - k as f64) * x);
        let mut sum = 1.0;
        let mut power = 1.0;
        let mut j = 1;
        loop {
            power *= -t;
            let term = power / (j + 1) as f64;
            sum += term;
            // Alternating series with shrinking terms: the tail is below the next term.
            if (power * t).abs() / (j + 2) as f64 <= 1e-17 || j > 64 {
                break;
            }
            j += 1;
        }
        sum / x
    } else {
        (z / x).ln() / (z - x)
    }
}

/// `h_{n,k}(x)` for `x` in `(0, 1/k)`.
pub fn h_nk(n: usize, k: usize, x: f64) -> Result<f64> {
    check_nk(n, k)?;
    let kf = k as f64;
    if !(x > 0.0 && x < 1.0 / kf) {
        return Err(Error::Domain(format!("x = {x} outside (0, 1/{k})")));
    }
    let z = (1.0 - kf * x) / (n - k) as f64;
    Ok(h_pair(n, k, x, z))
}

/// A point of `L_J` given by the common value on `J` and off `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineRoot {
    /// Value on the coordinates in `J`.
    pub x: f64,
    /// Value on the remaining coordinates.
    pub z: f64,
}

/// Minimizer and minimum of `h_{n,k}`.
fn argmin_h(n: usize, k: usize) -> (f64, f64) {
    let kf = k as f64;
    let nk = (n - k) as f64;
    let upper = 1.0 / kf;
    // 32 log-spaced points near 0 in x, 32 near 1/k via the off-J value z.
    let mut grid: Vec<f64> = Vec::with_capacity(64);
    for i in 0..32 {
        let frac = 1e-12_f64.powf(1.0 - i as f64 / 31.0);
        grid.push(0.5 * upper * frac);
    }
    for i in 0..32 {
        let frac = 1e-12_f64.powf(i as f64 / 31.0);
        let z = 0.5 * frac / nk;
        grid.push((1.0 - nk * z) / kf);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let h = |x: f64| h_pair(n, k, x, (1.0 - kf * x) / nk);
    let best = (0..grid.len())
        .min_by(|&a, &b| h(grid[a]).total_cmp(&h(grid[b])))
        .unwrap();
    let mut lo = if best == 0 { grid[0] * 0.5 } else { grid[best - 1] };
    let mut hi = if best + 1 == grid.len() { 0.5 * (grid[best] + upper) } else { grid[best + 1] };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut ha, mut hb) = (h(a), h(b));
    for _ in 0..200 {
        if hi - lo <= 1e-13 * upper {
            break;
        }
        if ha < hb {
            hi = b;
            b = a;
            hb = ha;
            a = hi - inv_phi * (hi - lo);
            ha = h(a);
        } else {
            lo = a;
            a = b;
            ha = hb;
            b = lo + inv_phi * (hi - lo);
            hb = h(b);
        }
    }
    let x = 0.5 * (lo + hi);
    let center = 1.0 / n as f64;
    // The symmetric case k = n/2 has its minimum exactly at the center.
    if 2 * k == n {
        return (center, n as f64);
    }
    (x, h(x))
}

/// `m(n,k) = min h_{n,k}` over `(0, 1/k)`.
pub fn m_nk(n: usize, k: usize) -> Result<f64> {
    check_nk(n, k)?;
    Ok(argmin_h(n, k).1)
}

/// Bisection on a decreasing function `g` over `(0, start]` for `g = beta`.
/// Returns the root parameter.
fn bisect_decreasing(g: impl Fn(f64) -> f64, start: f64, beta: f64) -> Result<f64> {
    let mut hi = start; // g(hi) <= beta
    let mut lo = start * 0.5;
    let mut guard = 0;
    while g(lo) <= beta {
        hi = lo;
        lo *= 0.5;
        guard += 1;
        if guard > 1100 || lo == 0.0 {
            return Err(Error::Domain(format!(
                "root of h = {beta} is below floating-point resolution"
            )));
        }
    }
    // g(lo) > beta >= g(hi)
    for _ in 0..400 {
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if (g(lo) - beta).abs() < (g(hi) - beta).abs() { lo } else { hi })
}

/// Solutions of `h_{n,k}(x) = beta`, outer root first.
pub fn solve_h_equals_beta(n: usize, k: usize, beta: Beta) -> Result<Vec<LineRoot>> {
    check_nk(n, k)?;
    let b = beta.value();
    if (b - n as f64).abs() < tol::BIFURCATION_WINDOW {
        return Err(Error::DegenerateBifurcation {
            beta: b,
            detail: "beta = n: a root collides with the simplex center".into(),
        });
    }
    let (x_star, m) = argmin_h(n, k);
    if b <= m {
        return Ok(Vec::new());
    }
    let kf = k as f64;
    let nk = (n - k) as f64;
    // Lower flank, parametrized by x in (0, x*).
    let lower = bisect_decreasing(|x| h_pair(n, k, x, (1.0 - kf * x) / nk), x_star, b)?;
    // Upper flank, parametrized by the off-J value z in (0, z*).
    let z_star = (1.0 - kf * x_star) / nk;
    let upper = bisect_decreasing(|z| h_pair(n, k, (1.0 - nk * z) / kf, z), z_star, b)?;
    Ok(vec![
        LineRoot { x: (1.0 - nk * upper) / kf, z: upper },
        LineRoot { x: lower, z: (1.0 - kf * lower) / nk },
    ])
}

/// The segment `L_J` through the simplex center.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSegmentJ {
    n: usize,
    subset: Vec<usize>,
}

impl LineSegmentJ {
    pub fn new(n: usize, mut subset: Vec<usize>) -> Result<Self> {
        subset.sort_unstable();
        subset.dedup();
        if subset.is_empty() || subset.len() >= n || subset.iter().any(|&j| j >= n) {
            return Err(Error::InvalidArgument(format!("{subset:?} is not a nonempty proper subset of [{n}]")));
        }
        Ok(Self { n, subset })
    }

    pub fn k(&self) -> usize {
        self.subset.len()
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// `l_J(x)` for `x` in `[0, 1/k]`.
    pub fn point(&self, x: f64) -> Result<Vec<f64>> {
        let k = self.k() as f64;
        if !(0.0..=1.0 / k).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0, 1/{}]", self.k())));
        }
        Ok(self.point_from_root(LineRoot { x, z: (1.0 - k * x) / (self.n - self.k()) as f64 }))
    }

    fn point_from_root(&self, root: LineRoot) -> Vec<f64> {
        let mut p = vec![root.z; self.n];
        for &j in &self.subset {
            p[j] = root.x;
        }
        p
    }

    /// Parameter of the point of `L_J` closest to `p`, and the residual distance.
    pub fn locate(&self, p: &[f64]) -> (f64, f64) {
        let k = self.k() as f64;
        let nk = (self.n - self.k()) as f64;
        // l_J(x) = base + x * dir with base = l_J(0).
        let dir: Vec<f64> = (0..self.n)
            .map(|i| if self.subset.contains(&i) { 1.0 } else { -k / nk })
            .collect();
        let base = self.point_from_root(LineRoot { x: 0.0, z: 1.0 / nk });
        let num: f64 = p.iter().zip(&base).zip(&dir).map(|((a, b), d)| (a - b) * d).sum();
        let den: f64 = dir.iter().map(|d| d * d).sum();
        let x = num / den;
        let q = self.point_from_root(LineRoot { x, z: (1.0 - k * x) / nk });
        let dist = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        (x, dist)
    }
}

/// `m(n,k)` for `k = 1..=n/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub n: usize,
    /// `values[k-1] = m(n,k)`.
    pub values: Vec<f64>,
}

impl ThresholdTable {
    pub fn compute(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("n = {n} < 2")));
        }
        let values = (1..=n / 2).map(|k| argmin_h(n, k).1).collect();
        Ok(Self { n, values })
    }

    /// `m(n,k)` with the conventions `m(n,0) = 0` and `m(n, n/2 + 1) = inf`.
    pub fn m(&self, k: usize) -> f64 {
        match k {
            0 => 0.0,
            k if k <= self.values.len() => self.values[k - 1],
            _ => f64::INFINITY,
        }
    }

    /// Whether `m(n,k)` increases strictly in `k`.
    pub fn is_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] < w[1])
    }

    /// Index `nu` with `m(n,nu) < beta < m(n,nu+1)`.
    pub fn regime(&self, beta: Beta) -> Result<usize> {
        let b = beta.value();
        for (i, &m) in self.values.iter().enumerate() {
            if (b - m).abs() < tol::BIFURCATION_WINDOW {
                return Err(Error::DegenerateBifurcation {
                    beta: b,
                    detail: format!("beta equals m({}, {})", self.n, i + 1),
                });
            }
        }
        Ok(self.values.iter().filter(|&&m| m < b).count())
    }
}

/// Which solution of `h = beta` a catalog point comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootKind {
    Center,
    /// The larger solution `x(k)`.
    Outer,
    /// The smaller solution `y(k)`.
    Inner,
}

/// Numeric stability label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

/// One fixed point of `S_beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogPoint {
    pub entries: Vec<f64>,
    /// The subset `J` of the carrying line; empty for the center.
    pub subset: Vec<usize>,
    pub root: RootKind,
    /// `|S_beta(p) - p|`.
    pub residual: f64,
    /// Asymptotic stability as predicted by the closed-form classification.
    pub theory_stable: Option<bool>,
    pub spectral_radius: Option<f64>,
    pub stability: Option<Stability>,
}

/// All fixed points of `S_beta` for one `(n, beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxCatalog {
    pub n: usize,
    pub beta: f64,
    /// Regime index `nu`.
    pub regime: usize,
    pub thresholds: ThresholdTable,
    /// `(x(k), y(k))` for `k = 1..=nu`.
    pub root_pairs: Vec<(LineRoot, LineRoot)>,
    /// Whether `points` lists every fixed point (only for `n <= 20`).
    pub materialized: bool,
    pub points: Vec<CatalogPoint>,
}

impl SoftmaxCatalog {
    /// Number of distinct fixed points, whether materialized or not.
    pub fn count(&self) -> u128 {
        let n = self.n as u32;
        let mut total: u128 = 1;
        for k in 1..=self.regime as u32 {
            let c = binomial(n, k);
            total += if 2 * k == n { c } else { 2 * c };
        }
        total
    }

    pub fn stable_count(&self) -> usize {
        self.points.iter().filter(|p| p.stability == Some(Stability::Stable)).count()
    }
}

fn binomial(n: u32, k: u32) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Subsets of `[n]` of size `k` in lexicographic order.
pub(crate) fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

fn softmax_residual(p: &[f64], beta: f64) -> f64 {
    let mut s = vec![0.0; p.len()];
    softmax_into(p, beta, &mut s);
    s.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Every fixed point of `S_beta` on the simplex of dimension `n - 1`.
pub fn enumerate_softmax_fixed_points(n: usize, beta: Beta) -> Result<SoftmaxCatalog> {
    let b = beta.value();
    if (b - n as f64).abs() < tol::BIFURCATION_WINDOW {
        return Err(Error::DegenerateBifurcation { beta: b, detail: "beta = n".into() });
    }
    let thresholds = ThresholdTable::compute(n)?;
    let regime = thresholds.regime(beta)?;
    let mut root_pairs = Vec::with_capacity(regime);
    for k in 1..=regime {
        let roots = solve_h_equals_beta(n, k, beta)?;
        if roots.len() != 2 {
            return Err(Error::Inconsistent(format!("expected two roots for k = {k}, found {}", roots.len())));
        }
        root_pairs.push((roots[0], roots[1]));
    }
    let materialized = n <= MATERIALIZE_LIMIT;
    let mut points = Vec::new();
    if materialized {
        let center = vec![1.0 / n as f64; n];
        points.push(CatalogPoint {
            residual: softmax_residual(&center, b),
            entries: center,
            subset: Vec::new(),
            root: RootKind::Center,
            theory_stable: None,
            spectral_radius: None,
            stability: None,
        });
        for (k, &(outer, inner)) in (1..=regime).zip(&root_pairs) {
            for subset in subsets(n, k) {
                // L_J = L_{J^c} when k = n/2; keep the subset containing 0.
                if 2 * k == n && subset[0] != 0 {
                    continue;
                }
                let line = LineSegmentJ::new(n, subset)?;
                for (root, kind) in [(outer, RootKind::Outer), (inner, RootKind::Inner)] {
                    let entries = line.point_from_root(root);
                    points.push(CatalogPoint {
                        residual: softmax_residual(&entries, b),
                        entries,
                        subset: line.subset().to_vec(),
                        root: kind,
                        theory_stable: None,
                        spectral_radius: None,
                        stability: None,
                    });
                }
            }
        }
    }
    Ok(SoftmaxCatalog { n, beta: b, regime, thresholds, root_pairs, materialized, points })
}

/// Labels catalog points as asymptotically stable or unstable.
///
/// The closed-form rule: the center is stable iff `beta < n`, and among the
/// line points exactly the `n` outer roots on vertex lines `l_{{j}}(x(1))`
/// are stable. Each label is checked against the spectral radius of the
/// softmax Jacobian; a numeric value within `1e-6` of one is reported as
/// marginal, and a strict numeric verdict that contradicts the rule is an
/// error.
pub fn classify_softmax_catalog(mut catalog: SoftmaxCatalog) -> Result<SoftmaxCatalog> {
    let n = catalog.n;
    let b = catalog.beta;
    if (b - n as f64).abs() < tol::BIFURCATION_WINDOW {
        return Err(Error::DegenerateBifurcation { beta: b, detail: "beta = n".into() });
    }
    let identity = PatternSet::identity(n)?;
    let vertex_outer = catalog.root_pairs.first().map(|pair| pair.0);
    for point in &mut catalog.points {
        let theory = match point.root {
            RootKind::Center => b < n as f64,
            _ => vertex_outer.is_some_and(|root| is_vertex_point(&point.entries, root)),
        };
        let jac = SymMatrix::new(jacobian_from_weights(&identity, b, &point.entries))?;
        let rho = spectral_radius(&jac);
        let numeric = if rho < 1.0 - tol::CATALOG_STABILITY_MARGIN {
            Stability::Stable
        } else if rho > 1.0 + tol::CATALOG_STABILITY_MARGIN {
            Stability::Unstable
        } else {
            Stability::Marginal
        };
        let contradicts = match numeric {
            Stability::Stable => !theory,
            Stability::Unstable => theory,
            Stability::Marginal => false,
        };
        if contradicts {
            return Err(Error::Inconsistent(format!(
                "point {:?} on J = {:?}: closed form says stable = {theory}, spectral radius {rho}",
                point.entries, point.subset
            )));
        }
        point.theory_stable = Some(theory);
        point.spectral_radius = Some(rho);
        point.stability = Some(numeric);
    }
    Ok(catalog)
}

/// Whether `p = l_{{j}}(x(1))` for some `j`.
fn is_vertex_point(p: &[f64], root: LineRoot) -> bool {
    let Some(j) = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])) else {
        return false;
    };
    p.iter().enumerate().all(|(i, &v)| {
        let target = if i == j { root.x } else { root.z };
        (v - target).abs() <= 1e-12
    })
}

/// The `n x n` Jacobian of `S_beta` at a simplex point.
pub fn softmax_jacobian(p: &[f64], beta: Beta) -> DMatrix<f64> {
    let n = p.len();
    let mut m = DMatrix::from_fn(n, n, |i, j| -p[i] * p[j]);
    for i in 0..n {
        m[(i, i)] += p[i];
    }
    m * beta.value()
}
