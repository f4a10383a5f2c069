//! Domain types for elliptical models and variable partitions, plus the
//! symmetric-positive-definite factorization every other module relies on.
//!
//! An elliptical model is a location vector `mu`, an SPD shape matrix
//! `omega` and a distribution kind (normal, or Student-t with `nu` degrees
//! of freedom). For the normal the shape matrix equals the covariance; for
//! the Student-t the covariance is `nu / (nu - 2) * omega`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative element-wise tolerance for symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A factorization pivot below this fraction of the largest diagonal entry
/// marks the block as effectively singular.
pub const NEAR_SINGULAR_TOL: f64 = 1e-12;

/// The distribution family of an elliptical model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind {
    Normal,
    /// Student-t with `nu` degrees of freedom. Requires `nu > 2` so the
    /// covariance `nu / (nu - 2) * omega` exists.
    StudentT { nu: f64 },
}

impl DistributionKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DistributionKind::Normal => Ok(()),
            DistributionKind::StudentT { nu } => {
                if nu.is_finite() && nu > 2.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidNu { nu })
                }
            }
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match *self {
            DistributionKind::Normal => None,
            DistributionKind::StudentT { nu } => Some(nu),
        }
    }

    /// Scalar relating covariance to shape: covariance = factor * omega.
    pub fn covariance_factor(&self) -> f64 {
        match *self {
            DistributionKind::Normal => 1.0,
            DistributionKind::StudentT { nu } => nu / (nu - 2.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistributionKind::Normal => "normal",
            DistributionKind::StudentT { .. } => "student_t",
        }
    }
}

/// Cholesky factorization of an SPD matrix: `m = L Lᵀ` with `L` lower
/// triangular. Keeps the pivots so callers can report which variable broke
/// positive definiteness or fell below the near-singular threshold.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
    log_det: f64,
    min_pivot: f64,
    max_diag: f64,
}

impl SpdFactor {
    /// Log-determinant of the factored matrix: `2 * sum(ln L_ii)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Smallest squared diagonal pivot encountered during factorization.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Largest diagonal entry of the original matrix.
    pub fn max_diag(&self) -> f64 {
        self.max_diag
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `m x = b` by forward/back substitution against the factor.
    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "solve_vec",
                expected: self.dim(),
                got: b.len(),
            });
        }
        let n = self.dim();
        let l = &self.lower;
        let mut y = b.clone();
        for i in 0..n {
            for k in 0..i {
                y[i] -= l[(i, k)] * y[k];
            }
            y[i] /= l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= l[(k, i)] * y[k];
            }
            y[i] /= l[(i, i)];
        }
        Ok(y)
    }

    /// Solves `m X = B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "solve_mat",
                expected: self.dim(),
                got: b.nrows(),
            });
        }
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve_vec(&DVector::from_column_slice(b.column(j).as_slice()))?;
            out.set_column(j, &col);
        }
        Ok(out)
    }
}

/// Checks symmetry within [`SYMMETRY_TOL`] and returns the symmetrized
/// matrix `(m + mᵀ) / 2`. Near-zero pairs fall back to an absolute
/// comparison against the matrix scale.
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "check_symmetric",
            expected: n,
            got: m.ncols(),
        });
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            let denom = a.abs().max(b.abs()).max(scale);
            let rel = (a - b).abs() / denom;
            if rel > SYMMETRY_TOL {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    max_asym: rel,
                });
            }
        }
    }
    let mut sym = m.clone();
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    Ok(sym)
}

/// Validates that `m` is symmetric positive definite and returns its
/// Cholesky factorization handle (triangular factor plus log-determinant).
///
/// The matrix is symmetrized before factorization; asymmetry beyond the
/// tolerance is an error. A failed factorization reports the pivot index at
/// which positive definiteness broke down.
pub fn validate_spd(m: &DMatrix<f64>) -> Result<SpdFactor> {
    let sym = check_symmetric(m)?;
    factor_symmetrized(&sym)
}

/// Cholesky on an already-symmetrized matrix.
fn factor_symmetrized(sym: &DMatrix<f64>) -> Result<SpdFactor> {
    let n = sym.nrows();
    let max_diag = (0..n).map(|i| sym[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let mut lower = DMatrix::zeros(n, n);
    let mut log_det = 0.0;
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = sym[(j, j)];
        for k in 0..j {
            d -= lower[(j, k)] * lower[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        min_pivot = min_pivot.min(d);
        let root = d.sqrt();
        lower[(j, j)] = root;
        log_det += d.ln();
        for i in (j + 1)..n {
            let mut s = sym[(i, j)];
            for k in 0..j {
                s -= lower[(i, k)] * lower[(j, k)];
            }
            lower[(i, j)] = s / root;
        }
    }
    Ok(SpdFactor {
        lower,
        log_det,
        min_pivot,
        max_diag,
    })
}

/// A fitted (or constructed) elliptical model: location, shape and kind.
///
/// Immutable after construction; construction enforces symmetry, positive
/// definiteness, and matching dimensions.
#[derive(Debug, Clone)]
pub struct EllipticalModel {
    mu: DVector<f64>,
    omega: DMatrix<f64>,
    kind: DistributionKind,
    labels: Vec<String>,
}

impl EllipticalModel {
    pub fn new(
        mu: DVector<f64>,
        omega: DMatrix<f64>,
        kind: DistributionKind,
        labels: Vec<String>,
    ) -> Result<Self> {
        kind.validate()?;
        let p = mu.len();
        if omega.nrows() != p {
            return Err(Error::DimensionMismatch {
                context: "EllipticalModel omega",
                expected: p,
                got: omega.nrows(),
            });
        }
        if labels.len() != p {
            return Err(Error::DimensionMismatch {
                context: "EllipticalModel labels",
                expected: p,
                got: labels.len(),
            });
        }
        let omega = check_symmetric(&omega)?;
        factor_symmetrized(&omega)?;
        Ok(Self {
            mu,
            omega,
            kind,
            labels,
        })
    }

    /// Convenience constructor that autogenerates `v0, v1, ...` labels.
    pub fn with_default_labels(
        mu: DVector<f64>,
        omega: DMatrix<f64>,
        kind: DistributionKind,
    ) -> Result<Self> {
        let labels = (0..mu.len()).map(|i| format!("v{i}")).collect();
        Self::new(mu, omega, kind, labels)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Covariance matrix when defined: `covariance_factor * omega`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.omega * self.kind.covariance_factor()
    }

    /// Builds the ordered stressing/stressed partition of this model.
    pub fn partition(&self, idx_x: &[usize], idx_y: &[usize]) -> Result<Partition> {
        build_partition(self, idx_x, idx_y)
    }
}

/// An ordered split of model variables into a stressing set X and a stressed
/// set Y, together with the four shape-matrix blocks it induces. Variables
/// outside both sets are marginalized out, which for elliptical families
/// means simply dropped.
#[derive(Debug, Clone)]
pub struct Partition {
    idx_x: Vec<usize>,
    idx_y: Vec<usize>,
    mu_x: DVector<f64>,
    mu_y: DVector<f64>,
    oxx: DMatrix<f64>,
    oxy: DMatrix<f64>,
    oyx: DMatrix<f64>,
    oyy: DMatrix<f64>,
    labels_x: Vec<String>,
    labels_y: Vec<String>,
}

impl Partition {
    pub fn p_x(&self) -> usize {
        self.idx_x.len()
    }

    pub fn p_y(&self) -> usize {
        self.idx_y.len()
    }

    pub fn idx_x(&self) -> &[usize] {
        &self.idx_x
    }

    pub fn idx_y(&self) -> &[usize] {
        &self.idx_y
    }

    pub fn mu_x(&self) -> &DVector<f64> {
        &self.mu_x
    }

    pub fn mu_y(&self) -> &DVector<f64> {
        &self.mu_y
    }

    pub fn omega_xx(&self) -> &DMatrix<f64> {
        &self.oxx
    }

    pub fn omega_xy(&self) -> &DMatrix<f64> {
        &self.oxy
    }

    pub fn omega_yx(&self) -> &DMatrix<f64> {
        &self.oyx
    }

    pub fn omega_yy(&self) -> &DMatrix<f64> {
        &self.oyy
    }

    pub fn labels_x(&self) -> &[String] {
        &self.labels_x
    }

    pub fn labels_y(&self) -> &[String] {
        &self.labels_y
    }

    /// Factors the stressing block, rejecting near-singular blocks with the
    /// offending variable names. All conditioning paths go through here so a
    /// degenerate stressor set fails loudly instead of amplifying noise.
    pub fn factor_xx(&self) -> Result<SpdFactor> {
        let factor = validate_spd(&self.oxx)?;
        if factor.min_pivot() < NEAR_SINGULAR_TOL * factor.max_diag() {
            return Err(Error::NearSingularBlock {
                pivot: 0,
                labels: self.labels_x.clone(),
            });
        }
        Ok(factor)
    }

    /// The joint shape matrix restricted to X ∪ Y in partition order:
    /// `[[XX, XY], [YX, YY]]`.
    pub fn joint_block(&self) -> DMatrix<f64> {
        let (px, py) = (self.p_x(), self.p_y());
        let n = px + py;
        let mut joint = DMatrix::zeros(n, n);
        joint.view_mut((0, 0), (px, px)).copy_from(&self.oxx);
        joint.view_mut((0, px), (px, py)).copy_from(&self.oxy);
        joint.view_mut((px, 0), (py, px)).copy_from(&self.oyx);
        joint.view_mut((px, px), (py, py)).copy_from(&self.oyy);
        joint
    }
}

/// Extracts the partition blocks of `model` for the given ordered index
/// sets. Blocks are exact sub-matrices in the given order; `omega_yx` is the
/// transpose of `omega_xy` by construction.
pub fn build_partition(
    model: &EllipticalModel,
    idx_x: &[usize],
    idx_y: &[usize],
) -> Result<Partition> {
    let p = model.dim();
    if idx_x.is_empty() {
        return Err(Error::EmptySet { side: "stressing" });
    }
    if idx_y.is_empty() {
        return Err(Error::EmptySet { side: "stressed" });
    }
    let mut seen = vec![false; p];
    for &i in idx_x.iter().chain(idx_y.iter()) {
        if i >= p {
            return Err(Error::IndexOutOfRange { index: i, dim: p });
        }
        if seen[i] {
            return Err(Error::OverlappingSets { index: i });
        }
        seen[i] = true;
    }
    let omega = model.omega();
    let gather_vec = |idx: &[usize]| DVector::from_fn(idx.len(), |k, _| model.mu()[idx[k]]);
    let gather_mat = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| omega[(rows[i], cols[j])])
    };
    let oxy = gather_mat(idx_x, idx_y);
    let oyx = oxy.transpose();
    let labels = |idx: &[usize]| -> Vec<String> {
        idx.iter().map(|&i| model.labels()[i].clone()).collect()
    };
    Ok(Partition {
        mu_x: gather_vec(idx_x),
        mu_y: gather_vec(idx_y),
        oxx: gather_mat(idx_x, idx_x),
        oyy: gather_mat(idx_y, idx_y),
        oxy,
        oyx,
        labels_x: labels(idx_x),
        labels_y: labels(idx_y),
        idx_x: idx_x.to_vec(),
        idx_y: idx_y.to_vec(),
    })
}
