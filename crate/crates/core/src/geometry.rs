//! Faces of the pattern polytope, hull projection, and the thickened region
//! `(P_lambda)^eps = lambda (P - b_P) + b_P + eps C(P_perp)` around a face.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::PatternSet;
use crate::tol;

/// Uniform draw from the probability simplex with `k` vertices.
pub fn sample_simplex_weights<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// A face `cv{w_j : j in I}` of the pattern polytope.
#[derive(Debug, Clone)]
pub struct FaceSpec<'a> {
    patterns: &'a PatternSet,
    indices: Vec<usize>,
    simplicial: bool,
}

impl<'a> FaceSpec<'a> {
    /// Any nonempty index set; records whether its vertices are affinely independent.
    pub fn new(patterns: &'a PatternSet, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() || indices.iter().any(|&j| j >= patterns.count()) {
            return Err(Error::InvalidFace {
                indices,
                detail: format!("need a nonempty subset of 0..{}", patterns.count()),
            });
        }
        let simplicial = affine_rank(patterns, &indices) + 1 == indices.len();
        Ok(Self { patterns, indices, simplicial })
    }

    /// A face whose vertices must be affinely independent.
    pub fn simplicial(patterns: &'a PatternSet, indices: Vec<usize>) -> Result<Self> {
        let face = Self::new(patterns, indices)?;
        if !face.simplicial {
            return Err(Error::InvalidFace {
                indices: face.indices,
                detail: "vertices are affinely dependent".into(),
            });
        }
        Ok(face)
    }

    pub fn patterns(&self) -> &'a PatternSet {
        self.patterns
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_simplicial(&self) -> bool {
        self.simplicial
    }

    /// Indices of patterns outside the face.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.patterns.count()).filter(|j| !self.indices.contains(j)).collect()
    }

    /// `d x |I|` matrix of the face's vertices.
    pub fn vertices(&self) -> DMatrix<f64> {
        self.patterns.matrix().select_columns(&self.indices)
    }

    /// The facet that omits the vertex at position `pos` of `indices()`.
    pub fn facet(&self, pos: usize) -> Result<FaceSpec<'a>> {
        if self.len() < 2 || pos >= self.len() {
            return Err(Error::InvalidArgument(format!("face of size {} has no facet {pos}", self.len())));
        }
        let mut idx = self.indices.clone();
        idx.remove(pos);
        Ok(FaceSpec { patterns: self.patterns, indices: idx, simplicial: self.simplicial })
    }

    /// All facets, as `(|I|-1)`-subsets.
    pub fn facets(&self) -> Vec<FaceSpec<'a>> {
        (0..self.len()).filter_map(|pos| self.facet(pos).ok()).collect()
    }
}

fn centered(patterns: &PatternSet, indices: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let w = patterns.matrix().select_columns(indices);
    let b = w.column_mean();
    let mut c = w;
    for mut col in c.column_iter_mut() {
        col -= &b;
    }
    (c, b)
}

fn affine_rank(patterns: &PatternSet, indices: &[usize]) -> usize {
    if indices.len() < 2 {
        return 0;
    }
    let (c, _) = centered(patterns, indices);
    c.svd(false, false).singular_values.iter().filter(|&&s| s > tol::AFFINE_RANK).count()
}

/// Arithmetic mean of the face's vertices.
pub fn barycenter(face: &FaceSpec) -> DVector<f64> {
    face.vertices().column_mean()
}

/// Euclidean projection onto a face.
#[derive(Debug, Clone, PartialEq)]
pub struct HullProjection {
    pub point: DVector<f64>,
    pub distance: f64,
    /// Convex coefficients over the face's indices.
    pub weights: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Active-set solve of `min |A c - e|` over `1^T c = 0`, `c >= -anchor`.
///
/// Returns `(c, e - A c, kkt residual, iterations)`.
fn anchored_projection(a: &DMatrix<f64>, anchor: &[f64], e: &DVector<f64>) -> Result<(Vec<f64>, DVector<f64>, f64, usize)> {
    let k = anchor.len();
    let mut c = vec![0.0; k];
    let mut active: Vec<bool> = anchor.iter().map(|&w| w <= 0.0).collect();
    let col_max = a.column_iter().map(|col| col.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let cap = (10 * k * k).max(10);
    let residual = |c: &[f64]| e - a * DVector::from_column_slice(c);
    for iter in 0..cap {
        let free: Vec<usize> = (0..k).filter(|&i| !active[i]).collect();
        let r = residual(&c);
        if free.len() >= 2 {
            let last = *free.last().unwrap();
            let f = free.len() - 1;
            let mut b = DMatrix::zeros(a.nrows(), f);
            for (col, &i) in free[..f].iter().enumerate() {
                b.set_column(col, &(a.column(i) - a.column(last)));
            }
            let svd = b.svd(true, true);
            let smax = svd.singular_values.max();
            let delta = svd
                .solve(&r, 1e-13 * smax.max(f64::MIN_POSITIVE))
                .map_err(|msg| Error::Inconsistent(msg.to_string()))?;
            let mut step = vec![0.0; k];
            for (col, &i) in free[..f].iter().enumerate() {
                step[i] = delta[col];
                step[last] -= delta[col];
            }
            let mut alpha = 1.0;
            let mut block = None;
            for &i in &free {
                if step[i] < 0.0 {
                    let limit = (c[i] + anchor[i]) / -step[i];
                    if limit < alpha {
                        alpha = limit;
                        block = Some(i);
                    }
                }
            }
            for &i in &free {
                c[i] += alpha * step[i];
            }
            if let Some(i) = block {
                c[i] = -anchor[i];
                active[i] = true;
                continue;
            }
        }
        // Subproblem optimum: check the bound multipliers.
        let r = residual(&c);
        let g = -(a.transpose() * &r);
        let free: Vec<usize> = (0..k).filter(|&i| !active[i]).collect();
        let nu = -free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64;
        let scale = (e.norm() + c.iter().map(|v| v.abs()).sum::<f64>() * col_max) * col_max;
        let floor = 1e-12 * scale + f64::MIN_POSITIVE;
        let stationarity = free.iter().map(|&i| (g[i] + nu).abs()).fold(0.0, f64::max);
        let worst = (0..k)
            .filter(|&i| active[i])
            .map(|i| (i, g[i] + nu))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match worst {
            Some((i, mu)) if mu < -floor => active[i] = false,
            _ => {
                let dual = worst.map_or(0.0, |(_, mu)| (-mu).max(0.0));
                return Ok((c, r, stationarity.max(dual), iter + 1));
            }
        }
    }
    let r = residual(&c);
    Err(Error::ProjectionFailed { iterations: cap, residual: r.norm() })
}

/// Projection of `x` onto `cv{w_j : j in I}`.
pub fn project_to_hull(x: &DVector<f64>, face: &FaceSpec) -> Result<HullProjection> {
    if x.len() != face.patterns().dim() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("point must be finite with the pattern dimension".into()));
    }
    let a = face.vertices();
    let k = face.len();
    let anchor = vec![1.0 / k as f64; k];
    let e = x - &a * DVector::from_column_slice(&anchor);
    let (c, r, kkt, iterations) = anchored_projection(&a, &anchor, &e)?;
    let weights: Vec<f64> = anchor.iter().zip(&c).map(|(w, dc)| (w + dc).max(0.0)).collect();
    let point = &a * DVector::from_column_slice(&weights);
    Ok(HullProjection { point, distance: r.norm(), weights, kkt_residual: kkt, iterations })
}

/// `Dist(sum_j p_j w_j, cv{w_j : j in I})` for a simplex vector `p` over all patterns.
///
/// Exact in relative terms even when the mass outside `I` is tiny.
pub fn mixture_distance(p: &[f64], face: &FaceSpec) -> Result<f64> {
    let patterns = face.patterns();
    if p.len() != patterns.count() {
        return Err(Error::InvalidArgument("weight vector length must equal the pattern count".into()));
    }
    let inside: f64 = face.indices().iter().map(|&j| p[j]).sum();
    let outside_idx = face.complement();
    let outside: f64 = outside_idx.iter().map(|&j| p[j]).sum();
    if outside == 0.0 {
        return Ok(0.0);
    }
    let a = face.vertices();
    let anchor: Vec<f64> = if inside > 0.0 {
        face.indices().iter().map(|&j| p[j] / inside).collect()
    } else {
        vec![1.0 / face.len() as f64; face.len()]
    };
    let mut e = -(&a * DVector::from_column_slice(&anchor)) * outside;
    for &j in &outside_idx {
        e += patterns.matrix().column(j) * p[j];
    }
    let (_, r, _, _) = anchored_projection(&a, &anchor, &e)?;
    Ok(r.norm())
}

/// Orthonormal basis of the complement of a face's direction space.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementBasis {
    pub vectors: Vec<DVector<f64>>,
}

impl ComplementBasis {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..3 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
}

/// Orthonormal basis of the face span, `|I| - 1` vectors.
fn face_span(face: &FaceSpec) -> Vec<DVector<f64>> {
    let (c, _) = centered(face.patterns(), face.indices());
    let mut q: Vec<DVector<f64>> = Vec::new();
    for col in c.column_iter() {
        let mut v = col.clone_owned();
        let norm0 = v.norm();
        orthogonalize(&mut v, &q);
        let norm = v.norm();
        if norm > tol::AFFINE_RANK && norm > 1e-8 * norm0 {
            q.push(v / norm);
        }
    }
    q
}

/// Complement basis by orthogonalizing the standard basis against the face span, in index order.
pub fn complement_basis(face: &FaceSpec) -> Result<ComplementBasis> {
    let d = face.patterns().dim();
    let span = face_span(face);
    if span.len() + 1 != face.len() {
        return Err(Error::InvalidFace {
            indices: face.indices().to_vec(),
            detail: format!("direction space has rank {} instead of {}", span.len(), face.len() - 1),
        });
    }
    let m = d - span.len();
    let mut all = span.clone();
    let mut vectors = Vec::with_capacity(m);
    let mut taken = vec![false; d];
    for threshold in [1e-3, 1e-8] {
        for i in 0..d {
            if vectors.len() == m || taken[i] {
                continue;
            }
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            orthogonalize(&mut v, &all);
            let norm = v.norm();
            if norm > threshold {
                let v = v / norm;
                all.push(v.clone());
                vectors.push(v);
                taken[i] = true;
            }
        }
    }
    if vectors.len() != m {
        return Err(Error::InvalidFace {
            indices: face.indices().to_vec(),
            detail: "could not complete the orthogonal complement".into(),
        });
    }
    Ok(ComplementBasis { vectors })
}

/// Uniform random point of the face.
pub fn sample_face_point<R: Rng + ?Sized>(face: &FaceSpec, rng: &mut R) -> DVector<f64> {
    let w = sample_simplex_weights(face.len(), rng);
    face.vertices() * DVector::from_vec(w)
}

/// Facet classes of the thickened region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FacetChoice {
    /// Extrusion of the scaled facet opposite the vertex at this position of the face.
    F0 { omit: usize },
    /// Side facet of the cross-polytope with these coordinate signs (`true` = negative).
    F1 { signs: Vec<bool> },
}

/// A sample on a facet of the thickened region.
#[derive(Debug, Clone, PartialEq)]
pub struct ThickenedSample {
    pub x: DVector<f64>,
    /// F0: the point of the original facet whose scaled image lies under `x`.
    /// F1: the projection of `x` onto the face.
    pub v: DVector<f64>,
    /// Unit vector with `x = v + mu r`.
    pub r: DVector<f64>,
    pub mu: f64,
    /// F0: `Dist(x, F)` for the original facet `F`. F1: `Dist(x, P)`.
    pub distance: f64,
}

/// The region `(P_lambda)^eps` around a simplicial face.
#[derive(Debug, Clone)]
pub struct ThickenedRegion<'a> {
    face: FaceSpec<'a>,
    lambda: f64,
    epsilon: f64,
    barycenter: DVector<f64>,
    basis: ComplementBasis,
    /// Left inverse of the centered vertex matrix on aff(P); its rows are barycentric gradients.
    bary: DMatrix<f64>,
}

impl<'a> ThickenedRegion<'a> {
    pub fn new(face: FaceSpec<'a>, lambda: f64, epsilon: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidArgument(format!("lambda = {lambda} outside (0, 1)")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
        }
        if !face.is_simplicial() {
            return Err(Error::Unsupported("thickened regions need a simplicial face".into()));
        }
        let basis = complement_basis(&face)?;
        let (c, barycenter) = centered(face.patterns(), face.indices());
        let k = face.len();
        let bary = if k >= 2 {
            // Barycentric weights solve [Q^T C; 1^T] lam = [Q^T y; 1] with Q an orthonormal span basis.
            let span = face_span(&face);
            let q = DMatrix::from_columns(&span);
            let mut a = DMatrix::from_element(k, k, 1.0);
            a.view_mut((0, 0), (k - 1, k)).copy_from(&(q.transpose() * &c));
            let inv = a
                .try_inverse()
                .ok_or_else(|| Error::Inconsistent("singular barycentric system".into()))?;
            inv.columns(0, k - 1) * q.transpose()
        } else {
            DMatrix::zeros(1, face.patterns().dim())
        };
        Ok(Self { face, lambda, epsilon, barycenter, basis, bary })
    }

    pub fn face(&self) -> &FaceSpec<'a> {
        &self.face
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn barycenter(&self) -> &DVector<f64> {
        &self.barycenter
    }

    pub fn basis(&self) -> &ComplementBasis {
        &self.basis
    }

    /// `m = d - dim(P)`.
    pub fn side_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn f0_count(&self) -> usize {
        if self.face.len() >= 2 {
            self.face.len()
        } else {
            0
        }
    }

    /// Barycentric coordinates (over the face) of the in-span part of `x`.
    pub fn barycentric(&self, x: &DVector<f64>) -> Vec<f64> {
        let k = self.face.len() as f64;
        let y = x - &self.barycenter;
        (&self.bary * y).iter().map(|g| g + 1.0 / k).collect()
    }

    /// Coordinates of `x - b_P` along the complement basis.
    pub fn side_coordinates(&self, x: &DVector<f64>) -> Vec<f64> {
        let y = x - &self.barycenter;
        self.basis.vectors.iter().map(|v| v.dot(&y)).collect()
    }

    /// Whether `x` lies in the region, up to `1e-9`.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        let k = self.face.len() as f64;
        let floor = (1.0 - self.lambda) / k;
        let inside = self.face.len() < 2 || self.barycentric(x).iter().all(|&l| l >= floor - tol::ON_FACE);
        // Span and complement together cover R^d, so the two coordinate sets decide membership.
        let side: f64 = self.side_coordinates(x).iter().map(|t| t.abs()).sum();
        inside && side <= self.epsilon * (1.0 + tol::ON_FACE)
    }

    /// Outward unit normal, within aff(P), of the facet opposite position `pos`.
    pub fn facet_normal(&self, pos: usize) -> DVector<f64> {
        let g = self.bary.row(pos).transpose();
        -(&g / g.norm())
    }

    /// Distance from `b_P` to the supporting hyperplane (within aff(P)) of facet `pos`.
    pub fn facet_offset(&self, pos: usize) -> f64 {
        (1.0 / self.face.len() as f64) / self.bary.row(pos).norm()
    }

    /// Distance from vertex `pos` to the supporting hyperplane of the opposite facet.
    pub fn facet_height(&self, pos: usize) -> f64 {
        1.0 / self.bary.row(pos).norm()
    }

    /// `q = min over the boundary of |v - b_P|`.
    pub fn inradius(&self) -> f64 {
        (0..self.f0_count()).map(|i| self.facet_offset(i)).fold(f64::INFINITY, f64::min)
    }

    /// `max_j |w_j - b_P|`.
    pub fn circumradius(&self) -> f64 {
        self.face
            .vertices()
            .column_iter()
            .map(|w| (w - &self.barycenter).norm())
            .fold(0.0, f64::max)
    }

    /// Uniform point of `eps C(P_perp)` (or of one of its facets when `signs` is given).
    fn side_offset<R: Rng + ?Sized>(&self, signs: Option<&[bool]>, rng: &mut R) -> DVector<f64> {
        let m = self.side_dim();
        let d = self.face.patterns().dim();
        let mut u = DVector::zeros(d);
        if m == 0 {
            return u;
        }
        let coords = match signs {
            // Uniform on the simplex facet of the L1 sphere.
            Some(_) => sample_simplex_weights(m, rng),
            // Uniform in the L1 ball: drop the slack coordinate of an (m+1)-simplex draw.
            None => sample_simplex_weights(m + 1, rng)[..m].to_vec(),
        };
        for (i, (v, t)) in self.basis.vectors.iter().zip(coords).enumerate() {
            let negative = match signs {
                Some(s) => s[i],
                None => rng.random::<bool>(),
            };
            u.axpy(if negative { -t } else { t }, v, 1.0);
        }
        u * self.epsilon
    }

    /// Random sign pattern selecting an F1 facet.
    pub fn random_side_facet<R: Rng + ?Sized>(&self, rng: &mut R) -> FacetChoice {
        FacetChoice::F1 { signs: (0..self.side_dim()).map(|_| rng.random::<bool>()).collect() }
    }
}

/// Draws a point on the chosen facet of the thickened region.
pub fn sample_thickened_facet<R: Rng + ?Sized>(
    region: &ThickenedRegion,
    choice: &FacetChoice,
    rng: &mut R,
) -> Result<ThickenedSample> {
    let b = &region.barycenter;
    let lam = region.lambda;
    match choice {
        FacetChoice::F0 { omit } => {
            if *omit >= region.f0_count() {
                return Err(Error::InvalidArgument(format!("F0 facet {omit} does not exist")));
            }
            let facet = region.face.facet(*omit)?;
            let v = sample_face_point(&facet, rng);
            let x = (&v - b) * lam + b + region.side_offset(None, rng);
            let diff = &x - &v;
            let mu = diff.norm();
            let distance = project_to_hull(&x, &facet)?.distance;
            Ok(ThickenedSample { r: diff / mu, x, v, mu, distance })
        }
        FacetChoice::F1 { signs } => {
            if region.side_dim() == 0 {
                return Err(Error::NoSideFacets);
            }
            if signs.len() != region.side_dim() {
                return Err(Error::InvalidArgument(format!(
                    "sign pattern has length {}, expected {}",
                    signs.len(),
                    region.side_dim()
                )));
            }
            let vp = sample_face_point(&region.face, rng);
            let v = (&vp - b) * lam + b;
            let u = region.side_offset(Some(signs), rng);
            let mu = u.norm();
            let x = &v + &u;
            Ok(ThickenedSample { r: u / mu, x, v, mu, distance: mu })
        }
    }
}
