//! Stress and systemic-risk measures over elliptical models: univariate
//! VaR/CoVaR, centroid shift and average loss, mutual information,
//! principal-axis rotation and shrinkage, the beta scale factor, portfolio
//! conditional variance, the Mahalanobis impact factor, and the
//! total-variance ratio.
//!
//! Everything is a pure function of a model, a partition and (where the
//! measure is stress-dependent) a stress vector. Quadratic forms and
//! determinants all go through the factorization in [`crate::model`].

use nalgebra::{DMatrix, DVector};
use statrs::distribution::ContinuousCDF;

use crate::conditioning::{conditional_shape_base, ConditionalModel};
use crate::error::{Error, Result};
use crate::model::{validate_spd, DistributionKind, EllipticalModel, Partition};

/// Negative values of mutual information beyond this magnitude indicate a
/// broken determinant computation rather than floating-point cancellation.
const MI_CLAMP: f64 = 1e-10;

/// Relative gap under which the top two eigenvalues are considered tied and
/// the principal axis (hence the rotation angle) is ill-defined.
const EIGEN_GAP_TOL: f64 = 1e-8;

/// How a stress vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressSource {
    EmpiricalVar,
    ParametricVar,
    Uniform,
    Explicit,
}

/// A resolved stress scenario: per-variable loss magnitudes for the
/// stressing set (losses are negated log-returns, so positive numbers mean
/// losses), plus the quantile used when the source is a VaR variant.
#[derive(Debug, Clone)]
pub struct StressScenario {
    pub x: DVector<f64>,
    pub q: Option<f64>,
    pub source: StressSource,
}

impl StressScenario {
    pub fn new(x: DVector<f64>, q: Option<f64>, source: StressSource) -> Result<Self> {
        if matches!(source, StressSource::EmpiricalVar | StressSource::ParametricVar) {
            match q {
                Some(q) if q > 0.0 && q < 1.0 => {}
                Some(q) => return Err(Error::InvalidQuantile { q }),
                None => return Err(Error::InvalidQuantile { q: f64::NAN }),
            }
        }
        Ok(Self { x, q, source })
    }

    /// The model-space conditioning point: losses are negated returns, so
    /// stressing at loss `l` means conditioning the return model at `-l`.
    pub fn conditioning_point(&self) -> DVector<f64> {
        -&self.x
    }
}

/// Standard-form quantile of the kind's standardized distribution.
pub fn standard_quantile(kind: DistributionKind, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQuantile { q });
    }
    match kind {
        DistributionKind::Normal => {
            let normal = statrs::distribution::Normal::new(0.0, 1.0)
                .map_err(|e| Error::InvalidParameters { reason: e.to_string() })?;
            Ok(normal.inverse_cdf(q))
        }
        DistributionKind::StudentT { nu } => {
            let t = statrs::distribution::StudentsT::new(0.0, 1.0, nu)
                .map_err(|e| Error::InvalidParameters { reason: e.to_string() })?;
            Ok(t.inverse_cdf(q))
        }
    }
}

/// Univariate value at risk `mu + quantile(q) * sigma` where the quantile is
/// taken from the standardized form of `kind` (for Student-t, `sigma` is the
/// scale parameter, not the standard deviation).
pub fn var_univariate(mu: f64, sigma: f64, kind: DistributionKind, q: f64) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::NonPositiveScale { sigma });
    }
    Ok(mu + standard_quantile(kind, q)? * sigma)
}

/// Conditional value at risk of the second variable of a two-variable model,
/// given the first sits at its own VaR at level `q_x`.
///
/// This is the scalar composition of the location-scale conditioning
/// formulas: the location shifts by `rho (sigma_y / sigma_x)(x - mu_x)`, the
/// scale becomes `sqrt(1 - rho^2) sigma_y` for the normal and
/// `sqrt((nu + d2x) / (nu + 1)) sqrt(1 - rho^2) sigma_y` for the Student-t
/// (whose conditional quantile then uses `nu + 1` degrees of freedom). It is
/// deliberately written as scalar algebra, not via the matrix engine, so the
/// two routes can be cross-checked against each other.
pub fn covar_univariate(model: &EllipticalModel, q_x: f64, q_y: f64) -> Result<f64> {
    if model.dim() != 2 {
        return Err(Error::TwoVariablesRequired { got: model.dim() });
    }
    let omega = model.omega();
    let (mu_x, mu_y) = (model.mu()[0], model.mu()[1]);
    let sigma_x = omega[(0, 0)].sqrt();
    let sigma_y = omega[(1, 1)].sqrt();
    if sigma_x <= 0.0 || sigma_y <= 0.0 {
        return Err(Error::NonPositiveScale {
            sigma: sigma_x.min(sigma_y),
        });
    }
    let rho = omega[(0, 1)] / (sigma_x * sigma_y);
    let x_star = var_univariate(mu_x, sigma_x, model.kind(), q_x)?;
    let shift = rho * (sigma_y / sigma_x) * (x_star - mu_x);
    let residual_var = (1.0 - rho * rho) * sigma_y * sigma_y;
    match model.kind() {
        DistributionKind::Normal => {
            let sigma_cond = residual_var.sqrt();
            Ok(mu_y + shift + standard_quantile(DistributionKind::Normal, q_y)? * sigma_cond)
        }
        DistributionKind::StudentT { nu } => {
            let d2x = (x_star - mu_x).powi(2) / (sigma_x * sigma_x);
            let sigma_cond = ((nu + d2x) / (nu + 1.0) * residual_var).sqrt();
            let q = standard_quantile(DistributionKind::StudentT { nu: nu + 1.0 }, q_y)?;
            Ok(mu_y + shift + q * sigma_cond)
        }
    }
}

/// Displacement of the conditional centroid from the unconditional one:
/// `Omega_YX Omega_XX^{-1} (x - mu_X)`.
pub fn centroid_shift(part: &Partition, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != part.p_x() {
        return Err(Error::DimensionMismatch {
            context: "centroid_shift",
            expected: part.p_x(),
            got: x.len(),
        });
    }
    let factor = part.factor_xx()?;
    let solved = factor.solve_vec(&(x - part.mu_x()))?;
    Ok(part.omega_yx() * solved)
}

/// Average propagated loss: the mean over stressed variables of
/// `Omega_YX Omega_XX^{-1} var_x`, with the regression operator applied to
/// the VaR loss vector directly.
pub fn average_loss(part: &Partition, var_x: &DVector<f64>) -> Result<f64> {
    if var_x.len() != part.p_x() {
        return Err(Error::DimensionMismatch {
            context: "average_loss",
            expected: part.p_x(),
            got: var_x.len(),
        });
    }
    let factor = part.factor_xx()?;
    let solved = factor.solve_vec(var_x)?;
    let propagated = part.omega_yx() * solved;
    Ok(propagated.sum() / part.p_y() as f64)
}

/// Mutual information between the stressing and stressed sets in nats:
/// `(log|Omega_XX| + log|Omega_YY| - log|Omega_ZZ|) / 2` with `Omega_ZZ` the
/// joint block over X and Y. Non-negative; independent of the stress value.
pub fn mutual_information(part: &Partition) -> Result<f64> {
    let ld_xx = validate_spd(part.omega_xx())?.log_det();
    let ld_yy = validate_spd(part.omega_yy())?.log_det();
    let ld_zz = validate_spd(&part.joint_block())?.log_det();
    let mi = 0.5 * (ld_xx + ld_yy - ld_zz);
    if mi < -MI_CLAMP {
        return Err(Error::InternalConsistency {
            what: format!("mutual information {mi:.3e} below -1e-10"),
        });
    }
    Ok(mi.max(0.0))
}

/// Eigenvalues sorted descending with the matching eigenvectors as columns.
fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn top_unit_eigenvector(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (values, vectors) = sorted_symmetric_eigen(m);
    let gap = (values[0] - values[1]) / values[0].abs().max(1e-300);
    if gap < EIGEN_GAP_TOL {
        return Err(Error::DegenerateTopEigenvalue { gap });
    }
    let mut v = DVector::from_column_slice(vectors.column(0).as_slice());
    v /= v.norm();
    Ok(v)
}

fn top_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// Rotation of the principal axis under conditioning, in degrees within
/// [0, 90]. Compares the top eigenvectors of the unconditional shape block
/// and of its Schur complement; the absolute value of their inner product
/// removes the eigenvector sign ambiguity. Independent of the stress value
/// and of the distribution kind. Defined as 0 when the stressed set has a
/// single variable.
pub fn principal_rotation(part: &Partition) -> Result<f64> {
    if part.p_y() == 1 {
        return Ok(0.0);
    }
    let u_before = top_unit_eigenvector(part.omega_yy())?;
    let base = conditional_shape_base(part)?;
    let u_after = top_unit_eigenvector(&base)?;
    let cosine = u_before.dot(&u_after).abs().clamp(0.0, 1.0);
    Ok(cosine.acos().to_degrees())
}

/// Relative change in the length of the principal axis:
/// `(lambda_Y - lambda_Y|X) / lambda_Y` over top eigenvalues.
///
/// Without a conditional model the eigenvalues come straight from the shape
/// blocks (the normal-case coefficients, independent of the stress value).
/// With a Student-t conditional model the conditional eigenvalue carries the
/// covariance scale `(nu + d2x) / (nu + p_X - 2)` and the unconditional one
/// the factor `nu / (nu - 2)`, so the comparison is between true covariance
/// axes and the result can go negative when the stress is extreme.
pub fn axis_shrinkage(part: &Partition, cm: Option<&ConditionalModel>) -> Result<f64> {
    let lambda_y = top_eigenvalue(part.omega_yy());
    let (lambda_cond, f_uncond, f_cond) = match cm {
        None => (top_eigenvalue(&conditional_shape_base(part)?), 1.0, 1.0),
        Some(cm) => {
            let lambda = top_eigenvalue(&cm.omega_cond_base);
            match cm.kind_cond {
                DistributionKind::Normal => (lambda, 1.0, 1.0),
                DistributionKind::StudentT { nu: nu_cond } => {
                    let nu = nu_cond - part.p_x() as f64;
                    (lambda, nu / (nu - 2.0), cm.cov_scale)
                }
            }
        }
    };
    let unconditional = lambda_y * f_uncond;
    Ok((unconditional - lambda_cond * f_cond) / unconditional)
}

/// The scalar multiplying conditional variability: 1 for the normal,
/// `(nu + d2x) / (nu + p_x - 2)` for the Student-t.
pub fn beta_factor(kind: DistributionKind, d2x: f64, p_x: usize) -> Result<f64> {
    if d2x < 0.0 || !d2x.is_finite() {
        return Err(Error::InvalidParameters {
            reason: format!("d2x must be a finite non-negative number, got {d2x}"),
        });
    }
    match kind {
        DistributionKind::Normal => Ok(1.0),
        DistributionKind::StudentT { nu } => {
            let denom = nu + p_x as f64 - 2.0;
            if denom <= 0.0 {
                return Err(Error::InvalidParameters {
                    reason: format!("nu + p_x - 2 must be positive, got {denom}"),
                });
            }
            Ok((nu + d2x) / denom)
        }
    }
}

/// Variance of the conditioned portfolio `w' Y`: the beta factor times the
/// quadratic form of `w` against the Schur complement. For the normal this
/// never exceeds the unconditional portfolio variance.
pub fn portfolio_conditional_variance(
    part: &Partition,
    w: &DVector<f64>,
    kind: DistributionKind,
    d2x: f64,
) -> Result<f64> {
    if w.len() != part.p_y() {
        return Err(Error::DimensionMismatch {
            context: "portfolio_conditional_variance",
            expected: part.p_y(),
            got: w.len(),
        });
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidParameters {
            reason: "portfolio vector w is zero".into(),
        });
    }
    let base = conditional_shape_base(part)?;
    let beta = beta_factor(kind, d2x, part.p_x())?;
    Ok(beta * (&base * w).dot(w))
}

/// Mahalanobis impact factor `d2(x*) / p_X`: how extreme the stress point is
/// relative to the body of the stressing distribution. Values above one
/// amplify Student-t conditional risk.
pub fn mahalanobis_impact_factor(part: &Partition, x_star: &DVector<f64>) -> Result<f64> {
    if x_star.len() != part.p_x() {
        return Err(Error::DimensionMismatch {
            context: "mahalanobis_impact_factor",
            expected: part.p_x(),
            got: x_star.len(),
        });
    }
    let factor = part.factor_xx()?;
    let dev = x_star - part.mu_x();
    let solved = factor.solve_vec(&dev)?;
    Ok(dev.dot(&solved).max(0.0) / part.p_x() as f64)
}

/// Ratio of conditional to unconditional total variance (determinant of the
/// covariance body), computed through log-determinants.
///
/// The conditional total variance is `cov_scale^{p_Y} |base|`. The
/// unconditional reference uses the shape-matrix determinant — the
/// normal-case coefficients — so the ratio crosses 1 exactly at
/// `d2x = p_X - 2` for a weakly coupled Student-t model instead of at a
/// nu-dependent point.
pub fn total_variance_ratio(part: &Partition, cm: &ConditionalModel) -> Result<f64> {
    if cm.p_y() != part.p_y() {
        return Err(Error::DimensionMismatch {
            context: "total_variance_ratio",
            expected: part.p_y(),
            got: cm.p_y(),
        });
    }
    let ld_base = validate_spd(&cm.omega_cond_base)?.log_det();
    let ld_yy = validate_spd(part.omega_yy())?.log_det();
    let p_y = part.p_y() as f64;
    let log_ratio = ld_base - ld_yy + p_y * cm.cov_scale.ln();
    Ok(log_ratio.exp())
}
