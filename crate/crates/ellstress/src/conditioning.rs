//! The conditional-distribution engine: exact distribution of the stressed
//! variables Y given the stressing variables X = x, for normal and
//! Student-t elliptical models.
//!
//! Conditioning shifts the location to
//! `mu_Y + Omega_YX Omega_XX^{-1} (x - mu_X)` and replaces the shape block
//! with the Schur complement `Omega_YY - Omega_YX Omega_XX^{-1} Omega_XY`.
//! For the normal that Schur complement is already the conditional
//! covariance, independent of x. For the Student-t the degrees of freedom
//! grow to `nu + p_X` and two x-dependent scalars appear:
//!
//! * shape scale `(nu + d2x) / (nu + p_X)` — multiplies the Schur complement
//!   to give the conditional shape matrix;
//! * covariance scale `(nu + d2x) / (nu + p_X - 2)` — multiplies it to give
//!   the conditional covariance,
//!
//! where `d2x` is the squared generalized Mahalanobis distance of the
//! stress point. All inverses are factorization solves; no matrix is ever
//! inverted explicitly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{check_symmetric, validate_spd, DistributionKind, EllipticalModel, Partition};

/// The distribution of Y given X = x: conditional location, the
/// x-independent Schur complement, updated kind, and the two scalar
/// multipliers that turn the Schur complement into shape and covariance.
#[derive(Debug, Clone)]
pub struct ConditionalModel {
    pub mu_cond: DVector<f64>,
    pub omega_cond_base: DMatrix<f64>,
    pub kind_cond: DistributionKind,
    pub d2x: f64,
    pub shape_scale: f64,
    pub cov_scale: f64,
}

impl ConditionalModel {
    pub fn p_y(&self) -> usize {
        self.mu_cond.len()
    }
}

/// Squared generalized Mahalanobis distance
/// `(x - mu_x)' omega_xx^{-1} (x - mu_x)`, computed via factorization solve.
pub fn mahalanobis_sq(
    x: &DVector<f64>,
    mu_x: &DVector<f64>,
    omega_xx: &DMatrix<f64>,
) -> Result<f64> {
    if x.len() != mu_x.len() || x.len() != omega_xx.nrows() {
        return Err(Error::DimensionMismatch {
            context: "mahalanobis_sq",
            expected: omega_xx.nrows(),
            got: x.len(),
        });
    }
    let factor = validate_spd(omega_xx)?;
    let dev = x - mu_x;
    let solved = factor.solve_vec(&dev)?;
    // Clamp the tiny negative values floating-point cancellation can produce.
    Ok(dev.dot(&solved).max(0.0))
}

/// Conditional location `mu_Y + Omega_YX Omega_XX^{-1} (x - mu_X)`; this is
/// also the multilinear regression of Y on X = x.
pub fn conditional_location(part: &Partition, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != part.p_x() {
        return Err(Error::DimensionMismatch {
            context: "conditional_location",
            expected: part.p_x(),
            got: x.len(),
        });
    }
    let factor = part.factor_xx()?;
    let dev = x - part.mu_x();
    let solved = factor.solve_vec(&dev)?;
    Ok(part.mu_y() + part.omega_yx() * solved)
}

/// The Schur complement `Omega_YY - Omega_YX Omega_XX^{-1} Omega_XY`,
/// symmetrized on output. This is the x-independent base of the conditional
/// shape matrix for every elliptical kind.
pub fn conditional_shape_base(part: &Partition) -> Result<DMatrix<f64>> {
    let factor = part.factor_xx()?;
    let solved = factor.solve_mat(part.omega_xy())?;
    let schur = part.omega_yy() - part.omega_yx() * solved;
    check_symmetric(&schur)
}

/// Conditions `model` on X = x over the given partition, producing the full
/// conditional law. Normal models stay normal with unit scales; Student-t
/// models move to `nu + p_X` degrees of freedom with x-dependent scales.
pub fn condition(
    model: &EllipticalModel,
    part: &Partition,
    x: &DVector<f64>,
) -> Result<ConditionalModel> {
    for &i in part.idx_x().iter().chain(part.idx_y().iter()) {
        if i >= model.dim() {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: model.dim(),
            });
        }
    }
    if x.len() != part.p_x() {
        return Err(Error::DimensionMismatch {
            context: "condition",
            expected: part.p_x(),
            got: x.len(),
        });
    }
    let factor = part.factor_xx()?;
    let dev = x - part.mu_x();
    let solved = factor.solve_vec(&dev)?;
    let d2x = dev.dot(&solved).max(0.0);
    let mu_cond = part.mu_y() + part.omega_yx() * &solved;
    let solved_block = factor.solve_mat(part.omega_xy())?;
    let omega_cond_base = check_symmetric(&(part.omega_yy() - part.omega_yx() * solved_block))?;

    let p_x = part.p_x() as f64;
    let (kind_cond, shape_scale, cov_scale) = match model.kind() {
        DistributionKind::Normal => (DistributionKind::Normal, 1.0, 1.0),
        DistributionKind::StudentT { nu } => (
            DistributionKind::StudentT { nu: nu + p_x },
            (nu + d2x) / (nu + p_x),
            (nu + d2x) / (nu + p_x - 2.0),
        ),
    };
    Ok(ConditionalModel {
        mu_cond,
        omega_cond_base,
        kind_cond,
        d2x,
        shape_scale,
        cov_scale,
    })
}

/// The conditional covariance matrix: `cov_scale * omega_cond_base`.
pub fn conditional_covariance(cm: &ConditionalModel) -> DMatrix<f64> {
    &cm.omega_cond_base * cm.cov_scale
}

/// The conditional shape matrix: `shape_scale * omega_cond_base`.
pub fn conditional_shape(cm: &ConditionalModel) -> DMatrix<f64> {
    &cm.omega_cond_base * cm.shape_scale
}
