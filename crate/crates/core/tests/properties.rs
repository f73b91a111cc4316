use hopfix::fixpoint::refine_newton;
use hopfix::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn beta(v: f64) -> Beta {
    Beta::new(v).unwrap()
}

/// `n` unit patterns in `R^d` from raw entries, skipping degenerate draws.
fn patterns(d: usize, n: usize) -> impl Strategy<Value = PatternSet> {
    prop::collection::vec(-1.0f64..1.0, d * n).prop_filter_map("degenerate patterns", move |raw| {
        let m = DMatrix::from_vec(d, n, raw);
        if m.column_iter().any(|c| c.norm() < 0.1) {
            return None;
        }
        PatternSet::normalized(m).ok()
    })
}

fn affinely_independent(w: &PatternSet, idx: &[usize]) -> bool {
    if idx.len() < 2 {
        return true;
    }
    let b = w.matrix().select_columns(idx).column_mean();
    let mut c = w.matrix().select_columns(idx);
    for mut col in c.column_iter_mut() {
        col -= &b;
    }
    let s = c.svd(false, false).singular_values;
    s.iter().filter(|&&v| v > 1e-3).count() == idx.len() - 1
}

/// Minimum distance from `x` to the face over a barycentric grid with `steps` steps per edge.
fn grid_distance(w: &PatternSet, idx: &[usize], x: &DVector<f64>, steps: usize) -> f64 {
    let v = w.matrix().select_columns(idx);
    let k = idx.len();
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; k];
    fn walk(pos: usize, left: usize, counts: &mut [usize], visit: &mut dyn FnMut(&[usize])) {
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
    walk(0, steps, &mut counts, &mut |c| {
        let lam = DVector::from_iterator(k, c.iter().map(|&ci| ci as f64 / steps as f64));
        best = best.min((&v * lam - x).norm());
    });
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_matches_grid(w in patterns(4, 6), k in 1usize..=4, x in prop::collection::vec(-1.5f64..1.5, 4)) {
        let idx: Vec<usize> = (0..k).collect();
        prop_assume!(affinely_independent(&w, &idx));
        let face = FaceSpec::new(&w, idx.clone()).unwrap();
        let x = DVector::from_vec(x);
        let proj = project_to_hull(&x, &face).unwrap();
        let steps = if k <= 3 { 1000 } else { 100 };
        let grid = grid_distance(&w, &idx, &x, steps);
        // The grid point next to the optimum is within `diam / steps` of it.
        let slack = 2.0 * (k as f64) / steps as f64;
        prop_assert!(proj.distance <= grid + 1e-12);
        prop_assert!(grid - proj.distance <= slack);
        prop_assert!((proj.point.clone() - &x).norm() - proj.distance < 1e-12);
        let wsum: f64 = proj.weights.iter().sum();
        prop_assert!((wsum - 1.0).abs() < 1e-12 && proj.weights.iter().all(|&l| l >= -1e-15));
    }

    #[test]
    fn complement_basis_is_orthonormal_complement(w in patterns(6, 5), k in 1usize..=5) {
        let idx: Vec<usize> = (0..k).collect();
        prop_assume!(affinely_independent(&w, &idx));
        let face = FaceSpec::new(&w, idx.clone()).unwrap();
        let basis = complement_basis(&face).unwrap();
        prop_assert_eq!(basis.vectors.len(), 6 - (k - 1));
        for (i, a) in basis.vectors.iter().enumerate() {
            for (j, b) in basis.vectors.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((a.dot(b) - target).abs() < 1e-12);
            }
            for &j in &idx[1..] {
                let diff = w.column(j) - w.column(idx[0]);
                prop_assert!(a.dot(&diff).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn margin_scales_and_dominates(w in patterns(5, 6), k in 1usize..6, c in 0.01f64..10.0, seed in any::<u64>()) {
        let j: Vec<usize> = (0..k).collect();
        let j0: Vec<usize> = (k..6).collect();
        let face = FaceSpec::new(&w, j.clone()).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let v = sample_face_point(&face, &mut rng);
        let m = margin(&w, &j, &j0, &v).unwrap();
        let scaled = margin(&w, &j, &j0, &(&v * c)).unwrap();
        prop_assert!((scaled - c * m).abs() <= 1e-12 * (1.0 + c));
        let tau2 = j0.iter().map(|&i| w.column(i).dot(&v)).fold(f64::NEG_INFINITY, f64::max);
        for &i in &j {
            prop_assert!(m >= w.column(i).dot(&v) - tau2 - 1e-15);
        }
    }

    #[test]
    fn contraction_bound_holds(w in patterns(4, 7), k in 1usize..7, seed in any::<u64>(), b in 1.0f64..30.0, frac in 0.01f64..0.49) {
        let j: Vec<usize> = (0..k).collect();
        let face = FaceSpec::new(&w, j.clone()).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let v = sample_face_point(&face, &mut rng);
        let delta = margin(&w, &j, &face.complement(), &v).unwrap();
        prop_assume!(delta > 1e-6);
        let eps = frac * delta;
        let r = DVector::from_fn(4, |i, _| ((seed >> (8 * i)) & 0xff) as f64 - 127.5).normalize();
        let x = &v + r * eps;
        let p = attention_weights(&w, beta(b), &x).unwrap();
        let measured = mixture_distance(p.as_slice(), &face).unwrap();
        let bound = contraction_bound(&w, &j, &v, eps, beta(b)).unwrap();
        prop_assert!(measured < bound, "measured {measured:e} >= bound {bound:e}");
    }

    #[test]
    fn mixture_distance_agrees_with_projection(w in patterns(4, 6), k in 1usize..=3, z in prop::collection::vec(-3.0f64..3.0, 6)) {
        let idx: Vec<usize> = (0..k).collect();
        prop_assume!(affinely_independent(&w, &idx));
        let face = FaceSpec::new(&w, idx).unwrap();
        let p = softmax(&z, beta(1.0)).unwrap();
        let x = w.matrix() * DVector::from_column_slice(p.as_slice());
        let direct = project_to_hull(&x, &face).unwrap().distance;
        let mixed = mixture_distance(p.as_slice(), &face).unwrap();
        prop_assert!((direct - mixed).abs() < 1e-9);
    }

    #[test]
    fn softmax_shift_invariance(z in prop::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0, b in 0.1f64..50.0) {
        let p = softmax(&z, beta(b)).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let q = softmax(&shifted, beta(b)).unwrap();
        let sum: f64 = p.as_slice().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_is_symmetric_psd(w in patterns(5, 7), x in prop::collection::vec(-1.0f64..1.0, 5), b in 0.1f64..40.0) {
        let j = jacobian(&w, beta(b), &DVector::from_vec(x)).unwrap();
        let m = j.matrix();
        prop_assert!((m - m.transpose()).abs().max() < 1e-12);
        prop_assert!(j.eigenvalues().iter().all(|&e| e > -1e-10));
    }

    #[test]
    fn records_are_rotation_equivariant(w in patterns(3, 5), x0 in prop::collection::vec(-1.0f64..1.0, 3), b in 1.0f64..20.0, angles in prop::collection::vec(0.0f64..6.3, 3)) {
        let rot = nalgebra::Rotation3::from_euler_angles(angles[0], angles[1], angles[2]);
        let q = DMatrix::from_iterator(3, 3, rot.matrix().iter().copied());
        let wq = PatternSet::new(&q * w.matrix()).unwrap();
        let x0 = DVector::from_vec(x0);
        let (Ok(a), Ok(c)) = (refine_newton(&w, beta(b), &x0), refine_newton(&wq, beta(b), &(&q * &x0))) else {
            return Ok(());
        };
        let mapped = &q * DVector::from_vec(a.location.clone());
        prop_assert!((mapped - DVector::from_vec(c.location.clone())).norm() < 1e-8);
        prop_assert!((a.spectral_radius - c.spectral_radius).abs() < 1e-8);
        prop_assert_eq!(a.classification, c.classification);
    }

    #[test]
    fn catalog_is_permutation_closed(n in 2usize..=7, b in 0.5f64..20.0) {
        prop_assume!((b - n as f64).abs() > 1e-3);
        let catalog = match enumerate_softmax_fixed_points(n, beta(b)) {
            Ok(c) => c,
            // Values too close to a bifurcation are reported, not guessed.
            Err(Error::DegenerateBifurcation { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert_eq!(catalog.points.len() as u128, catalog.count());
        let rotate = |p: &[f64]| -> Vec<f64> { (0..n).map(|i| p[(i + 1) % n]).collect() };
        for p in &catalog.points {
            prop_assert!(p.residual < 1e-10);
            let r = rotate(&p.entries);
            let hit = catalog.points.iter().any(|q| q.entries.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-9));
            prop_assert!(hit);
            // Every point takes at most two distinct values, one per side of the subset.
            let mut vals: Vec<f64> = p.entries.clone();
            vals.sort_by(f64::total_cmp);
            vals.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            prop_assert!(vals.len() <= 2);
        }
    }
}
