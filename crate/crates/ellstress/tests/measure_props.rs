//! Property tests and brute-force oracle checks for the measure layer.

use ellstress::{
    average_loss, axis_shrinkage, beta_factor, centroid_shift, condition,
    conditional_shape_base, mahalanobis_impact_factor, mahalanobis_sq, mutual_information,
    portfolio_conditional_variance, principal_rotation, sample, total_variance_ratio,
    DistributionKind, EllipticalModel,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn model_from(seed: u64, dim: usize, kind: DistributionKind) -> EllipticalModel {
    let m = testkit::random_spd_model(dim, seed);
    EllipticalModel::with_default_labels(m.mu, m.omega, kind).unwrap()
}

/// Every measure against an explicit-inverse / naive-determinant
/// implementation on random 3-5 variable models.
#[test]
fn measures_match_brute_force_oracle() {
    for seed in 0..40u64 {
        let dim = 3 + (seed % 3) as usize;
        let kind = if seed % 2 == 0 {
            DistributionKind::Normal
        } else {
            DistributionKind::StudentT { nu: 5.0 + (seed % 7) as f64 }
        };
        let model = model_from(seed + 1000, dim, kind);
        let (idx_x, idx_y) = testkit::random_split(dim, seed + 2000);
        let part = model.partition(&idx_x, &idx_y).unwrap();
        let p_x = idx_x.len();
        let p_y = idx_y.len();

        let oxx = part.omega_xx().clone();
        let oyy = part.omega_yy().clone();
        let oyx = part.omega_yx().clone();
        let oxy = part.omega_xy().clone();
        let oxx_inv = testkit::naive_inverse(&oxx);

        let x = DVector::from_fn(p_x, |k, _| part.mu_x()[k] + 0.3 * (k as f64 + 1.0));
        let dev = &x - part.mu_x();

        let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-12);

        // Mahalanobis distance and impact factor.
        let d2_oracle = (&oxx_inv * &dev).dot(&dev);
        let d2 = mahalanobis_sq(&x, part.mu_x(), &oxx).unwrap();
        assert!(rel(d2, d2_oracle) < 1e-8, "d2 {d2} vs {d2_oracle}");
        let b = mahalanobis_impact_factor(&part, &x).unwrap();
        assert!(rel(b, d2_oracle / p_x as f64) < 1e-8);

        // Centroid shift.
        let shift_oracle = &oyx * &oxx_inv * &dev;
        let shift = centroid_shift(&part, &x).unwrap();
        assert!((&shift - &shift_oracle).norm() / shift_oracle.norm().max(1e-12) < 1e-8);

        // Average loss.
        let losses = DVector::from_fn(p_x, |k, _| 0.5 + 0.1 * k as f64);
        let l_oracle = (&oyx * &oxx_inv * &losses).sum() / p_y as f64;
        let l = average_loss(&part, &losses).unwrap();
        assert!(rel(l, l_oracle) < 1e-8, "L {l} vs {l_oracle}");

        // Mutual information via naive determinants.
        let joint = part.joint_block();
        let mi_oracle = 0.5
            * ((testkit::naive_det(&oxx) * testkit::naive_det(&oyy))
                / testkit::naive_det(&joint))
            .ln();
        let mi = mutual_information(&part).unwrap();
        assert!(
            (mi - mi_oracle).abs() / mi_oracle.abs().max(1e-10) < 1e-8,
            "MI {mi} vs {mi_oracle}"
        );

        // Schur complement, portfolio variance, beta.
        let schur_oracle = &oyy - &oyx * &oxx_inv * &oxy;
        let base = conditional_shape_base(&part).unwrap();
        assert!((&base - &schur_oracle).norm() / schur_oracle.norm() < 1e-8);

        let w = DVector::from_fn(p_y, |k, _| 1.0 - 0.2 * k as f64);
        let beta_oracle = match kind {
            DistributionKind::Normal => 1.0,
            DistributionKind::StudentT { nu } => (nu + d2_oracle) / (nu + p_x as f64 - 2.0),
        };
        let beta = beta_factor(kind, d2, p_x).unwrap();
        assert!(rel(beta, beta_oracle) < 1e-8);
        let pv_oracle = beta_oracle * (&schur_oracle * &w).dot(&w);
        let pv = portfolio_conditional_variance(&part, &w, kind, d2).unwrap();
        assert!(rel(pv, pv_oracle) < 1e-8, "portfolio {pv} vs {pv_oracle}");

        // Rotation and shrinkage against power iteration.
        if p_y >= 2 {
            let (lam_y, u_y) = testkit::power_iteration_top(&oyy, 100_000, 1e-15);
            let (lam_c, u_c) = testkit::power_iteration_top(&schur_oracle, 100_000, 1e-15);
            match principal_rotation(&part) {
                Ok(theta) => {
                    let theta_oracle = u_y.dot(&u_c).abs().clamp(0.0, 1.0).acos().to_degrees();
                    assert!(
                        (theta - theta_oracle).abs() < 1e-6,
                        "theta {theta} vs {theta_oracle}"
                    );
                }
                // Degenerate spectra are legitimately refused; skip the check.
                Err(_) => {}
            }
            let delta = axis_shrinkage(&part, None).unwrap();
            let delta_oracle = (lam_y - lam_c) / lam_y;
            assert!((delta - delta_oracle).abs() < 1e-8);
        }

        // Total variance ratio via naive determinants.
        let cm = condition(&model, &part, &x).unwrap();
        let tvr = total_variance_ratio(&part, &cm).unwrap();
        let tvr_oracle = cm.cov_scale.powi(p_y as i32) * testkit::naive_det(&schur_oracle)
            / testkit::naive_det(&oyy);
        assert!(rel(tvr, tvr_oracle) < 1e-8, "tvr {tvr} vs {tvr_oracle}");
    }
}

/// Expected impact factor over draws of the stressing variables is 1 for
/// the normal (the covariance-metric trace identity).
#[test]
fn impact_factor_expectation_is_one_for_normal() {
    let model = model_from(55, 4, DistributionKind::Normal);
    let part = model.partition(&[0, 1, 2], &[3]).unwrap();
    let x_model = EllipticalModel::with_default_labels(
        part.mu_x().clone(),
        part.omega_xx().clone(),
        DistributionKind::Normal,
    )
    .unwrap();
    let draws = sample(&x_model, 100_000, 77).unwrap();
    let n = draws.nrows();
    let mut values = Vec::with_capacity(n);
    for r in 0..n {
        let x = DVector::from_fn(3, |k, _| draws[(r, k)]);
        values.push(mahalanobis_impact_factor(&part, &x).unwrap());
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "mean B {mean} (se {se})");
}

fn arb_spd(dim: usize) -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, dim * dim),
        prop::collection::vec(-0.5f64..0.5, dim),
        0.3f64..1.5,
    )
        .prop_map(move |(entries, mu, shift)| {
            let a = DMatrix::from_row_slice(dim, dim, &entries);
            let mut omega = &a * a.transpose();
            for i in 0..dim {
                omega[(i, i)] += shift;
            }
            (omega, DVector::from_column_slice(&mu))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// MI is non-negative and symmetric in the two sets.
    #[test]
    fn mi_nonnegative_and_symmetric((omega, mu) in arb_spd(4)) {
        let model = EllipticalModel::with_default_labels(mu, omega, DistributionKind::Normal)
            .unwrap();
        let fwd = model.partition(&[0, 1], &[2, 3]).unwrap();
        let rev = model.partition(&[2, 3], &[0, 1]).unwrap();
        let a = mutual_information(&fwd).unwrap();
        let b = mutual_information(&rev).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    /// The centroid shift is linear in the stress deviation.
    #[test]
    fn centroid_shift_is_linear((omega, mu) in arb_spd(4), alpha in 0.0f64..1.0) {
        let model = EllipticalModel::with_default_labels(mu, omega, DistributionKind::Normal)
            .unwrap();
        let part = model.partition(&[0, 1], &[2, 3]).unwrap();
        let x1 = DVector::from_column_slice(&[0.7, -0.4]) + part.mu_x();
        let x2 = DVector::from_column_slice(&[-0.2, 1.1]) + part.mu_x();
        let blend = &x1 * alpha + &x2 * (1.0 - alpha);
        let s1 = centroid_shift(&part, &x1).unwrap();
        let s2 = centroid_shift(&part, &x2).unwrap();
        let sb = centroid_shift(&part, &blend).unwrap();
        let expect = &s1 * alpha + &s2 * (1.0 - alpha);
        prop_assert!((sb - expect).norm() <= 1e-10);
    }

    /// e.L is homogeneous and additive in the stress vector.
    #[test]
    fn average_loss_is_linear((omega, mu) in arb_spd(4), scale in 0.1f64..5.0) {
        let model = EllipticalModel::with_default_labels(mu, omega, DistributionKind::Normal)
            .unwrap();
        let part = model.partition(&[0, 1], &[2, 3]).unwrap();
        let a = DVector::from_column_slice(&[0.5, 0.2]);
        let b = DVector::from_column_slice(&[0.1, 0.9]);
        let la = average_loss(&part, &a).unwrap();
        let lb = average_loss(&part, &b).unwrap();
        let scaled = average_loss(&part, &(&a * scale)).unwrap();
        let summed = average_loss(&part, &(&a + &b)).unwrap();
        prop_assert!((scaled - scale * la).abs() <= 1e-10 * la.abs().max(1.0));
        prop_assert!((summed - (la + lb)).abs() <= 1e-10 * (la + lb).abs().max(1.0));
    }

    /// The rotation angle stays in [0, 90] and ignores global rescaling.
    #[test]
    fn rotation_in_range_and_scale_invariant((omega, mu) in arb_spd(4), factor in 0.01f64..100.0) {
        let model = EllipticalModel::with_default_labels(
            mu.clone(),
            omega.clone(),
            DistributionKind::Normal,
        )
        .unwrap();
        let part = model.partition(&[0, 1], &[2, 3]).unwrap();
        if let Ok(theta) = principal_rotation(&part) {
            prop_assert!((0.0..=90.0).contains(&theta));
            let scaled_model = EllipticalModel::with_default_labels(
                mu,
                omega * factor,
                DistributionKind::Normal,
            )
            .unwrap();
            let scaled_part = scaled_model.partition(&[0, 1], &[2, 3]).unwrap();
            let theta2 = principal_rotation(&scaled_part).unwrap();
            prop_assert!((theta - theta2).abs() <= 1e-9);
        }
    }

    /// Beta is identically 1 for the normal and strictly increasing in the
    /// stress distance for the Student-t.
    #[test]
    fn beta_monotone_in_distance(d2 in 0.0f64..50.0, nu in 2.1f64..40.0, p_x in 1usize..6) {
        prop_assert_eq!(beta_factor(DistributionKind::Normal, d2, p_x).unwrap(), 1.0);
        let kind = DistributionKind::StudentT { nu };
        let lo = beta_factor(kind, d2, p_x).unwrap();
        let hi = beta_factor(kind, d2 + 0.5, p_x).unwrap();
        prop_assert!(hi > lo);
    }
}
