mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hfprec_core::matcore::{
    eigen_range, elementwise_norm, inverse_or_pinv, kron_apply, log_det_spd, operator_norm, pinv, spd_inverse,
    sparsity_stats,
};
use hfprec_core::quadcov::{realized_cov, realized_crosscov, PathPanel};
use hfprec_core::SymMatrix;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn diagonal_between_extreme_eigenvalues(seed in any::<u64>(), d in 1usize..12) {
        let a = gaussian_matrix(d, d, &mut rng(seed));
        let s = SymMatrix::symmetrize(&a + a.transpose());
        let (lo, hi) = eigen_range(&s).unwrap();
        for i in 0..d {
            prop_assert!(lo - 1e-10 <= s[(i, i)] && s[(i, i)] <= hi + 1e-10);
        }
    }

    #[test]
    fn row_and_column_norms_agree_for_symmetric(seed in any::<u64>(), d in 2usize..12) {
        let a = gaussian_matrix(d, d, &mut rng(seed));
        let s = &a + a.transpose();
        let deg = sparsity_stats(&SymMatrix::symmetrize(s.clone()), 0.0).max_degree as f64;
        let n1 = operator_norm(&s, 1.0).unwrap();
        prop_assert!((n1 - operator_norm(&s, f64::INFINITY).unwrap()).abs() < 1e-12);
        prop_assert!(n1 <= (deg + 1.0).sqrt() * operator_norm(&s, 2.0).unwrap() + 1e-10);
    }

    #[test]
    fn kron_apply_matches_explicit_product(seed in any::<u64>(), p in 1usize..5, q in 1usize..5) {
        let mut r = rng(seed);
        let a = gaussian_matrix(p, p, &mut r);
        let b = gaussian_matrix(q, q, &mut r);
        let x = gaussian_matrix(q, p, &mut r);
        let lhs = kron(&a, &b) * vec_of(&x);
        let rhs = vec_of(&kron_apply(&a, &b, &x).unwrap());
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_satisfies_penrose_conditions(seed in any::<u64>(), d in 2usize..9, rank in 1usize..4) {
        let mut r = rng(seed);
        let f = gaussian_matrix(d, rank.min(d), &mut r);
        let a = &f * f.transpose();
        let p = pinv(&a, 1e-12).unwrap();
        // nonzero spectrum of A equals that of FᵀF; errors scale with ε·κ
        let gram = (f.transpose() * &f).symmetric_eigenvalues();
        let kappa = gram.max() / gram.min();
        let tol = 1e-10 + 200.0 * f64::EPSILON * kappa;
        prop_assert!((&a * &p * &a - &a).amax() < tol * a.amax());
        prop_assert!((&p * &a * &p - &p).amax() < tol * p.amax());
        prop_assert!(((&a * &p) - (&a * &p).transpose()).amax() < tol);
        let (_, inverse) = inverse_or_pinv(&a, 1e12).unwrap();
        prop_assert_eq!(inverse, rank >= d);
    }

    #[test]
    fn spd_inverse_and_log_det(seed in any::<u64>(), d in 1usize..10) {
        let s = random_spd(d, &mut rng(seed));
        let inv = spd_inverse(&s).unwrap();
        prop_assert!((inv.as_matrix() - gauss_jordan_inverse(s.as_matrix())).amax() < 1e-9);
        let det = s.as_matrix().determinant();
        prop_assert!((log_det_spd(&s).unwrap() - det.ln()).abs() < 1e-9);
    }

    #[test]
    fn realized_cov_bilinearity(seed in any::<u64>(), n in 2usize..60, d in 1usize..5) {
        let mut r = rng(seed);
        let x = PathPanel::from_returns(&gaussian_matrix(n, d, &mut r), None).unwrap();
        let a = gaussian_matrix(3, d, &mut r);
        let y = PathPanel::new(x.values() * a.transpose()).unwrap();
        let want = &a * realized_cov(&x).as_matrix() * a.transpose();
        prop_assert!((realized_cov(&y).as_matrix() - &want).amax() < 1e-10 * want.amax().max(1.0));
        let cc = realized_crosscov(&y, &x).unwrap();
        prop_assert!((cc - &a * realized_cov(&x).as_matrix()).amax() < 1e-10 * want.amax().max(1.0));
    }
}

#[test]
fn elementwise_norms() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 0.0]);
    assert_eq!(elementwise_norm(&a, 1.0).unwrap(), 6.0);
    assert_eq!(elementwise_norm(&a, f64::INFINITY).unwrap(), 3.0);
    assert!((elementwise_norm(&a, 2.0).unwrap() - 14f64.sqrt()).abs() < 1e-15);
}

/// Rank-2 Gram matrix on which a bidiagonal-QR SVD returned factors with a
/// reconstruction error of 5e-2.
#[test]
fn pinv_of_rank_two_gram_matrix() {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(5, 5, &[
        6.77776986975292428e-1, 5.73299877384086054e-1, -7.51411058220266548e-1, 2.50104795545579128e-1, -3.96288117959659791e-1,
        5.73299877384086054e-1, 6.71970427930536851e-1, -4.29338144820267553e-1, -2.36430304875456576e-1, -6.19615004378414991e-1,
        -7.51411058220266548e-1, -4.29338144820267553e-1, 1.06046402362002046e0, -7.71250065921910033e-1, 1.25728764015578781e-1,
        2.50104795545579128e-1, -2.36430304875456576e-1, -7.71250065921910033e-1, 1.16524309542180959e0, 5.34959056361981711e-1,
        -3.96288117959659791e-1, -6.19615004378414991e-1, 1.25728764015578781e-1, 5.34959056361981711e-1, 6.64177939486065072e-1,
    ]);
    let p = pinv(&a, 1e-12).unwrap();
    assert!((&a * &p * &a - &a).amax() < 1e-12, "{}", (&a * &p * &a - &a).amax());
    assert!((&p * &a * &p - &p).amax() < 1e-12);
    let eig = a.clone().symmetric_eigenvalues();
    let mut ev: Vec<f64> = eig.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    let sv = hfprec_core::matcore::singular_values(&a).unwrap();
    for (s, e) in sv.iter().zip(&ev) {
        assert!((s - e.max(0.0)).abs() < 1e-13, "{s} vs {e}");
    }
}
