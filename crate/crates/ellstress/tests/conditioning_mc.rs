//! Monte Carlo cross-checks of the conditional-law engine: kernel-conditioned
//! joint sampling against the analytic conditional moments, direct
//! conditional sampling, the tower property of locations, variance
//! reduction, and the exact bivariate reductions.

use ellstress::{
    condition, conditional_covariance, conditional_location, conditional_shape_base,
    kernel_conditional_moments, sample, sample_conditional, DistributionKind, EllipticalModel,
};
use nalgebra::{DMatrix, DVector};

fn frobenius_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn model_from(seed: u64, dim: usize, kind: DistributionKind) -> EllipticalModel {
    let m = testkit::random_spd_model(dim, seed);
    EllipticalModel::with_default_labels(m.mu, m.omega, kind).unwrap()
}

/// Kernel-conditioned joint draws reproduce the analytic conditional mean
/// (both kinds) and the normal conditional covariance.
#[test]
fn kernel_conditioning_matches_analytic_law() {
    for (seed, kind) in [
        (101u64, DistributionKind::Normal),
        (102, DistributionKind::Normal),
        (103, DistributionKind::StudentT { nu: 8.0 }),
        (104, DistributionKind::StudentT { nu: 12.0 }),
    ] {
        let dim = 4 + (seed % 3) as usize; // 4..6
        let model = model_from(seed, dim, kind);
        let (idx_x, idx_y) = testkit::random_split(dim, seed);
        let part = model.partition(&idx_x, &idx_y).unwrap();

        // Stress inside one marginal standard deviation to keep retention up.
        let cov_factor = kind.covariance_factor();
        let x = DVector::from_fn(part.p_x(), |k, _| {
            let i = idx_x[k];
            let sd = (cov_factor * model.omega()[(i, i)]).sqrt();
            model.mu()[i] + 0.6 * sd * if k % 2 == 0 { 1.0 } else { -1.0 }
        });

        let km = kernel_conditional_moments(&model, &part, &x, 200_000, seed * 7 + 1).unwrap();
        let analytic_mean = conditional_location(&part, &x).unwrap();
        let cm = condition(&model, &part, &x).unwrap();

        for k in 0..part.p_y() {
            let se = (km.cov[(k, k)] / km.retained as f64).sqrt();
            assert!(
                (km.mean[k] - analytic_mean[k]).abs() < 3.0 * se,
                "seed {seed} component {k}: {} vs {} (se {se}, retained {})",
                km.mean[k],
                analytic_mean[k],
                km.retained
            );
        }
        if kind == DistributionKind::Normal {
            let analytic_cov = conditional_covariance(&cm);
            let err = frobenius_rel(&km.cov, &analytic_cov);
            assert!(
                err < 0.05,
                "seed {seed}: covariance Frobenius error {err} (retained {})",
                km.retained
            );
        }
    }
}

/// Sampling the conditional Student-t directly (shape-scale construction)
/// reproduces the covariance-scale prediction: the two scalars are two views
/// of one distribution.
#[test]
fn student_shape_and_covariance_scales_are_consistent() {
    let model = model_from(42, 5, DistributionKind::StudentT { nu: 6.0 });
    let part = model.partition(&[0, 1], &[2, 3, 4]).unwrap();
    let x = DVector::from_fn(2, |k, _| model.mu()[part.idx_x()[k]] + 0.8 * (k as f64 + 1.0));
    let cm = condition(&model, &part, &x).unwrap();
    assert_eq!(cm.kind_cond, DistributionKind::StudentT { nu: 8.0 });

    let draws = sample_conditional(&cm, 400_000, 9).unwrap();
    let n = draws.nrows();
    let mean = DVector::from_fn(3, |j, _| draws.column(j).sum() / n as f64);
    let centered = DMatrix::from_fn(n, 3, |r, c| draws[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;

    let predicted = conditional_covariance(&cm);
    let err = frobenius_rel(&cov, &predicted);
    assert!(err < 0.05, "Frobenius error {err}");
}

/// Averaging the conditional location over draws of X recovers the
/// unconditional location of Y.
#[test]
fn tower_property_of_locations() {
    for kind in [
        DistributionKind::Normal,
        DistributionKind::StudentT { nu: 7.0 },
    ] {
        let model = model_from(77, 5, kind);
        let (idx_x, idx_y) = (vec![0usize, 1], vec![2usize, 3, 4]);
        let part = model.partition(&idx_x, &idx_y).unwrap();

        let x_model = EllipticalModel::with_default_labels(
            part.mu_x().clone(),
            part.omega_xx().clone(),
            kind,
        )
        .unwrap();
        let draws = sample(&x_model, 100_000, 5).unwrap();
        let n = draws.nrows();

        let mut locations = DMatrix::zeros(n, part.p_y());
        for r in 0..n {
            let x = DVector::from_fn(part.p_x(), |k, _| draws[(r, k)]);
            let loc = conditional_location(&part, &x).unwrap();
            for k in 0..part.p_y() {
                locations[(r, k)] = loc[k];
            }
        }
        for k in 0..part.p_y() {
            let mean = locations.column(k).sum() / n as f64;
            let var = locations
                .column(k)
                .iter()
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - part.mu_y()[k]).abs() < 3.0 * se,
                "kind {kind:?} component {k}: {mean} vs {} (se {se})",
                part.mu_y()[k]
            );
        }
    }
}

/// Conditioning never inflates a normal portfolio variance:
/// w' (Omega_YY - base) w >= 0 for every w.
#[test]
fn conditioning_reduces_normal_portfolio_variance() {
    for seed in 0..10u64 {
        let model = model_from(seed + 300, 5, DistributionKind::Normal);
        let part = model.partition(&[0, 1], &[2, 3, 4]).unwrap();
        let base = conditional_shape_base(&part).unwrap();
        let reduction = part.omega_yy() - &base;
        for w_seed in 0..100u64 {
            let w = DVector::from_fn(3, |i, _| {
                let h = ellstress::derive_seed(w_seed, i as u64 + seed);
                (h % 2000) as f64 / 1000.0 - 1.0
            });
            let quad = (&reduction * &w).dot(&w);
            assert!(quad >= -1e-10, "seed {seed}/{w_seed}: w'(YY - base)w = {quad}");
        }
    }
}

/// At p_x = p_y = 1 the matrix engine reproduces the scalar location-scale
/// conditioning formulas exactly.
#[test]
fn bivariate_reduction_is_exact() {
    let mut checked = 0usize;
    for i in 0..1000u64 {
        let h = |salt: u64| (ellstress::derive_seed(i, salt) % 10_000) as f64 / 10_000.0;
        let mu_x = 2.0 * h(1) - 1.0;
        let mu_y = 2.0 * h(2) - 1.0;
        let sigma_x = 0.2 + 2.8 * h(3);
        let sigma_y = 0.2 + 2.8 * h(4);
        let rho = 1.9 * h(5) - 0.95;
        let x = mu_x + 6.0 * h(6) - 3.0;
        let nu = 2.5 + 27.5 * h(7);
        let kind = if i % 2 == 0 {
            DistributionKind::Normal
        } else {
            DistributionKind::StudentT { nu }
        };

        let omega = DMatrix::from_row_slice(
            2,
            2,
            &[
                sigma_x * sigma_x,
                rho * sigma_x * sigma_y,
                rho * sigma_x * sigma_y,
                sigma_y * sigma_y,
            ],
        );
        let model = EllipticalModel::with_default_labels(
            DVector::from_column_slice(&[mu_x, mu_y]),
            omega,
            kind,
        )
        .unwrap();
        let part = model.partition(&[0], &[1]).unwrap();
        let cm = condition(&model, &part, &DVector::from_column_slice(&[x])).unwrap();

        let expected_mu = mu_y + rho * (sigma_y / sigma_x) * (x - mu_x);
        let residual = (1.0 - rho * rho) * sigma_y * sigma_y;
        let scale = |v: f64| v.abs().max(1.0);
        assert!(
            (cm.mu_cond[0] - expected_mu).abs() <= 1e-12 * scale(expected_mu),
            "location: {} vs {expected_mu}",
            cm.mu_cond[0]
        );
        assert!(
            (cm.omega_cond_base[(0, 0)] - residual).abs() <= 1e-12 * scale(residual),
            "base: {} vs {residual}",
            cm.omega_cond_base[(0, 0)]
        );
        if let DistributionKind::StudentT { nu } = kind {
            let d2 = (x - mu_x).powi(2) / (sigma_x * sigma_x);
            let expected_scale2 = (nu + d2) / (nu + 1.0) * residual;
            let got = cm.shape_scale * cm.omega_cond_base[(0, 0)];
            assert!(
                (got - expected_scale2).abs() <= 1e-12 * scale(expected_scale2),
                "student scale: {got} vs {expected_scale2}"
            );
            assert_eq!(cm.kind_cond, DistributionKind::StudentT { nu: nu + 1.0 });
        }
        checked += 1;
    }
    assert_eq!(checked, 1000);
}
