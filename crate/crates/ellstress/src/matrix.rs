//! Group-level measure sweeps: evaluate a chosen measure for every ordered
//! (stressor group, stressed group) pair, plus the one-vs-rest variant where
//! each group is stressed against the remainder of the system and vice
//! versa.
//!
//! Cells are independent pure computations evaluated on a worker pool and
//! written to pre-sized storage by index, so the result does not depend on
//! scheduling. A failed cell records its error in the matrix metadata
//! instead of aborting the sweep. Mutual-information matrices are exactly
//! symmetric because each unordered pair is computed once and mirrored.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::conditioning::{condition, ConditionalModel};
use crate::error::{Error, Result};
use crate::estimation::{empirical_var_vector, ReturnPanel};
use crate::measures::{
    average_loss, axis_shrinkage, mahalanobis_impact_factor, mutual_information,
    principal_rotation, standard_quantile, total_variance_ratio, var_univariate, StressScenario,
    StressSource,
};
use crate::model::{build_partition, DistributionKind, EllipticalModel, Partition};

/// Identifier of a sweepable measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasureId {
    /// Average propagated loss.
    AverageLoss,
    /// Mutual information between the groups (nats).
    MutualInformation,
    /// Principal-axis rotation (degrees).
    Rotation,
    /// Principal-axis shrinkage.
    AxisShrinkage,
    /// Mahalanobis impact factor of the stress point.
    ImpactFactor,
    /// Conditional-to-unconditional total-variance ratio.
    TotalVarianceRatio,
    /// Mean univariate conditional VaR loss across the stressed group.
    CoVar,
}

impl MeasureId {
    pub const ALL: [MeasureId; 7] = [
        MeasureId::AverageLoss,
        MeasureId::MutualInformation,
        MeasureId::Rotation,
        MeasureId::AxisShrinkage,
        MeasureId::ImpactFactor,
        MeasureId::TotalVarianceRatio,
        MeasureId::CoVar,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            MeasureId::AverageLoss => "L",
            MeasureId::MutualInformation => "MI",
            MeasureId::Rotation => "THETA",
            MeasureId::AxisShrinkage => "DELTA",
            MeasureId::ImpactFactor => "B",
            MeasureId::TotalVarianceRatio => "TVR",
            MeasureId::CoVar => "COVAR",
        }
    }

    pub fn parse(code: &str) -> Option<MeasureId> {
        Self::ALL.iter().copied().find(|m| m.code() == code)
    }

    /// Whether the measure depends on the resolved stress vector at all.
    pub fn stress_dependent(&self) -> bool {
        !matches!(self, MeasureId::MutualInformation | MeasureId::Rotation)
    }
}

/// How e.L treats the stress vector: applied verbatim, or as a deviation
/// from the stressing location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EqLForm {
    #[default]
    Literal,
    Deviation,
}

/// Template for producing per-variable stress losses.
#[derive(Debug, Clone)]
pub enum StressPolicy {
    /// Negated lower-tail empirical return quantile at level `q`.
    EmpiricalVar { q: f64 },
    /// Parametric VaR from the model marginals at level `q`.
    ParametricVar { q: f64 },
    /// The same constant loss for every stressing variable.
    Uniform { c: f64 },
    /// Caller-supplied per-variable losses (full model length).
    Explicit { losses: DVector<f64> },
}

impl StressPolicy {
    pub fn describe(&self) -> String {
        match self {
            StressPolicy::EmpiricalVar { q } => format!("empirical-var(q={q})"),
            StressPolicy::ParametricVar { q } => format!("parametric-var(q={q})"),
            StressPolicy::Uniform { c } => format!("uniform({c})"),
            StressPolicy::Explicit { .. } => "explicit".to_string(),
        }
    }
}

/// Resolves a stress policy into per-variable loss magnitudes for the given
/// stressing index set. Losses are negated lower-tail returns, floored at
/// zero.
pub fn resolve_stress(
    policy: &StressPolicy,
    model: &EllipticalModel,
    idx_x: &[usize],
    panel: Option<&ReturnPanel>,
) -> Result<StressScenario> {
    match policy {
        StressPolicy::EmpiricalVar { q } => {
            let panel = panel.ok_or_else(|| Error::InvalidParameters {
                reason: "empirical-var stress requires a return panel".into(),
            })?;
            let losses = empirical_var_vector(panel, idx_x, *q)?;
            StressScenario::new(losses, Some(*q), StressSource::EmpiricalVar)
        }
        StressPolicy::ParametricVar { q } => {
            if !(*q > 0.0 && *q < 1.0) {
                return Err(Error::InvalidQuantile { q: *q });
            }
            let mut losses = DVector::zeros(idx_x.len());
            for (k, &i) in idx_x.iter().enumerate() {
                if i >= model.dim() {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        dim: model.dim(),
                    });
                }
                let sigma = model.omega()[(i, i)].sqrt();
                let lower_tail = var_univariate(model.mu()[i], sigma, model.kind(), 1.0 - q)?;
                losses[k] = (-lower_tail).max(0.0);
            }
            StressScenario::new(losses, Some(*q), StressSource::ParametricVar)
        }
        StressPolicy::Uniform { c } => {
            if !(*c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidParameters {
                    reason: format!("uniform stress constant must be positive, got {c}"),
                });
            }
            StressScenario::new(
                DVector::from_element(idx_x.len(), *c),
                None,
                StressSource::Uniform,
            )
        }
        StressPolicy::Explicit { losses } => {
            if losses.len() != model.dim() {
                return Err(Error::DimensionMismatch {
                    context: "explicit stress vector",
                    expected: model.dim(),
                    got: losses.len(),
                });
            }
            let sliced = DVector::from_fn(idx_x.len(), |k, _| losses[idx_x[k]]);
            StressScenario::new(sliced, None, StressSource::Explicit)
        }
    }
}

/// Sweep-wide settings shared by every cell.
#[derive(Clone)]
pub struct SweepConfig<'a> {
    /// Quantile used by VaR-flavored measures (CoVaR level).
    pub q: f64,
    pub policy: StressPolicy,
    pub eq_l_form: EqLForm,
    pub panel: Option<&'a ReturnPanel>,
    pub dataset_id: Option<String>,
}

/// A cell that failed, with the reason; the sweep continues past it.
#[derive(Debug, Clone)]
pub struct CellError {
    pub row: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct MatrixMetadata {
    pub q: f64,
    pub kind: String,
    pub nu: Option<f64>,
    pub policy: String,
    pub dataset_id: Option<String>,
}

/// A labeled square array of one measure over every ordered
/// (stressor, stressed) group pair. Rows are the stressor (conditioning)
/// groups; the diagonal is undefined and stored as missing.
#[derive(Debug, Clone)]
pub struct MeasureMatrix {
    pub measure: MeasureId,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub cell_errors: Vec<CellError>,
    pub metadata: MatrixMetadata,
}

impl MeasureMatrix {
    pub fn n_groups(&self) -> usize {
        self.row_labels.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row][col]
    }
}

/// One-vs-rest sweep: for every group, the measure of the group stressing
/// the rest of the system and of the rest stressing the group.
#[derive(Debug, Clone)]
pub struct OneVsRest {
    pub measure: MeasureId,
    pub labels: Vec<String>,
    pub group_to_rest: Vec<Option<f64>>,
    pub rest_to_group: Vec<Option<f64>>,
    pub cell_errors: Vec<CellError>,
    pub metadata: MatrixMetadata,
}

fn validate_groups(
    model: &EllipticalModel,
    groups: &BTreeMap<String, Vec<usize>>,
) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::GroupsInvalid {
            reason: format!("need at least 2 groups, got {}", groups.len()),
        });
    }
    let mut seen = vec![false; model.dim()];
    for (name, idx) in groups {
        if idx.is_empty() {
            return Err(Error::GroupsInvalid {
                reason: format!("group {name} is empty"),
            });
        }
        for &i in idx {
            if i >= model.dim() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    dim: model.dim(),
                });
            }
            if seen[i] {
                return Err(Error::GroupsInvalid {
                    reason: format!("variable index {i} appears in more than one group"),
                });
            }
            seen[i] = true;
        }
    }
    Ok(())
}

fn metadata(model: &EllipticalModel, cfg: &SweepConfig) -> MatrixMetadata {
    MatrixMetadata {
        q: cfg.q,
        kind: model.kind().name().to_string(),
        nu: model.kind().nu(),
        policy: cfg.policy.describe(),
        dataset_id: cfg.dataset_id.clone(),
    }
}

/// Evaluates one measure for a stressor/stressed pair. The scenario carries
/// loss magnitudes; the model-space conditioning point is their negation.
fn eval_cell(
    model: &EllipticalModel,
    part: &Partition,
    measure: MeasureId,
    scenario: &StressScenario,
    cfg: &SweepConfig,
) -> Result<f64> {
    let value = match measure {
        MeasureId::AverageLoss => {
            let effective = match cfg.eq_l_form {
                EqLForm::Literal => scenario.x.clone(),
                EqLForm::Deviation => &scenario.x + part.mu_x(),
            };
            average_loss(part, &effective)?
        }
        MeasureId::MutualInformation => mutual_information(part)?,
        MeasureId::Rotation => principal_rotation(part)?,
        MeasureId::AxisShrinkage => match model.kind() {
            DistributionKind::Normal => axis_shrinkage(part, None)?,
            DistributionKind::StudentT { .. } => {
                let cm = condition(model, part, &scenario.conditioning_point())?;
                axis_shrinkage(part, Some(&cm))?
            }
        },
        MeasureId::ImpactFactor => {
            mahalanobis_impact_factor(part, &scenario.conditioning_point())?
        }
        MeasureId::TotalVarianceRatio => {
            let cm = condition(model, part, &scenario.conditioning_point())?;
            total_variance_ratio(part, &cm)?
        }
        MeasureId::CoVar => {
            let cm = condition(model, part, &scenario.conditioning_point())?;
            mean_conditional_var_loss(&cm, cfg.q)?
        }
    };
    if !value.is_finite() {
        return Err(Error::InternalConsistency {
            what: format!("{} produced a non-finite value", measure.code()),
        });
    }
    Ok(value)
}

/// Mean over the stressed variables of the univariate conditional VaR in
/// loss space: the conditional marginal of variable k has location
/// `mu_cond[k]` and scale `sqrt(shape_scale * base[k,k])`, so its loss-side
/// VaR at level `q` is `-mu_cond[k] + quantile(q) * scale`.
fn mean_conditional_var_loss(cm: &ConditionalModel, q: f64) -> Result<f64> {
    let quantile = standard_quantile(cm.kind_cond, q)?;
    let mut total = 0.0;
    for k in 0..cm.p_y() {
        let scale = (cm.shape_scale * cm.omega_cond_base[(k, k)]).sqrt();
        total += -cm.mu_cond[k] + quantile * scale;
    }
    Ok(total / cm.p_y() as f64)
}

/// Evaluates `measure` for every ordered group pair. See module docs for
/// the failure and symmetry semantics.
pub fn measure_matrix(
    model: &EllipticalModel,
    groups: &BTreeMap<String, Vec<usize>>,
    measure: MeasureId,
    cfg: &SweepConfig,
) -> Result<MeasureMatrix> {
    validate_groups(model, groups)?;
    let labels: Vec<String> = groups.keys().cloned().collect();
    let index_sets: Vec<&Vec<usize>> = groups.values().collect();
    let g = labels.len();

    // Resolve stress per stressor row up front: policy-level problems are
    // sweep-level errors, not cell errors.
    let scenarios: Vec<StressScenario> = index_sets
        .iter()
        .map(|idx| resolve_stress(&cfg.policy, model, idx, cfg.panel))
        .collect::<Result<_>>()?;

    let mirror = measure == MeasureId::MutualInformation;
    let pairs: Vec<(usize, usize)> = (0..g)
        .flat_map(|i| (0..g).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && (!mirror || i < j))
        .collect();

    let results: Vec<(usize, usize, Result<f64>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let value = build_partition(model, index_sets[i], index_sets[j])
                .and_then(|part| eval_cell(model, &part, measure, &scenarios[i], cfg));
            (i, j, value)
        })
        .collect();

    let mut values = vec![vec![None; g]; g];
    let mut cell_errors = Vec::new();
    for (i, j, outcome) in results {
        match outcome {
            Ok(v) => {
                values[i][j] = Some(v);
                if mirror {
                    values[j][i] = Some(v);
                }
            }
            Err(e) => {
                cell_errors.push(CellError {
                    row: i,
                    col: j,
                    message: e.to_string(),
                });
                if mirror {
                    cell_errors.push(CellError {
                        row: j,
                        col: i,
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    cell_errors.sort_by_key(|c| (c.row, c.col));
    Ok(MeasureMatrix {
        measure,
        row_labels: labels.clone(),
        col_labels: labels,
        values,
        cell_errors,
        metadata: metadata(model, cfg),
    })
}

/// Evaluates `measure` for each group against the rest of the system in
/// both directions.
pub fn one_vs_rest(
    model: &EllipticalModel,
    groups: &BTreeMap<String, Vec<usize>>,
    measure: MeasureId,
    cfg: &SweepConfig,
) -> Result<OneVsRest> {
    validate_groups(model, groups)?;
    let labels: Vec<String> = groups.keys().cloned().collect();
    let index_sets: Vec<&Vec<usize>> = groups.values().collect();
    let g = labels.len();

    let rest_sets: Vec<Vec<usize>> = (0..g)
        .map(|i| {
            let mut rest = Vec::new();
            for (j, idx) in index_sets.iter().enumerate() {
                if j != i {
                    rest.extend_from_slice(idx);
                }
            }
            rest.sort_unstable();
            rest
        })
        .collect();

    let jobs: Vec<(usize, bool)> = (0..g).flat_map(|i| [(i, true), (i, false)]).collect();
    let results: Vec<(usize, bool, Result<f64>)> = jobs
        .par_iter()
        .map(|&(i, group_is_stressor)| {
            let (idx_x, idx_y): (&[usize], &[usize]) = if group_is_stressor {
                (index_sets[i], &rest_sets[i])
            } else {
                (&rest_sets[i], index_sets[i])
            };
            let value = resolve_stress(&cfg.policy, model, idx_x, cfg.panel).and_then(|scn| {
                build_partition(model, idx_x, idx_y)
                    .and_then(|part| eval_cell(model, &part, measure, &scn, cfg))
            });
            (i, group_is_stressor, value)
        })
        .collect();

    let mut group_to_rest = vec![None; g];
    let mut rest_to_group = vec![None; g];
    let mut cell_errors = Vec::new();
    for (i, group_is_stressor, outcome) in results {
        match outcome {
            Ok(v) => {
                if group_is_stressor {
                    group_to_rest[i] = Some(v);
                } else {
                    rest_to_group[i] = Some(v);
                }
            }
            Err(e) => cell_errors.push(CellError {
                row: i,
                col: usize::from(!group_is_stressor),
                message: e.to_string(),
            }),
        }
    }
    cell_errors.sort_by_key(|c| (c.row, c.col));
    Ok(OneVsRest {
        measure,
        labels,
        group_to_rest,
        rest_to_group,
        cell_errors,
        metadata: metadata(model, cfg),
    })
}

/// Pearson correlation of two matrices over the off-diagonal cells present
/// in both. `None` when fewer than three shared cells exist or a matrix is
/// constant across them.
pub fn offdiag_pearson(a: &MeasureMatrix, b: &MeasureMatrix) -> Option<f64> {
    if a.n_groups() != b.n_groups() {
        return None;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..a.n_groups() {
        for j in 0..a.n_groups() {
            if i == j {
                continue;
            }
            if let (Some(x), Some(y)) = (a.values[i][j], b.values[i][j]) {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    if xs.len() < 3 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..xs.len() {
        let dx = xs[k] - mx;
        let dy = ys[k] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn block_model(coupling: f64) -> (EllipticalModel, BTreeMap<String, Vec<usize>>) {
        // Three 2-variable groups; adjacent groups coupled by `coupling`.
        let p = 6;
        let mut omega = DMatrix::identity(p, p);
        for g in 0..3usize {
            let (a, b) = (2 * g, 2 * g + 1);
            omega[(a, b)] = 0.5;
            omega[(b, a)] = 0.5;
        }
        for (a, b) in [(0usize, 2usize), (2, 4)] {
            for da in 0..2 {
                for db in 0..2 {
                    omega[(a + da, b + db)] = coupling;
                    omega[(b + db, a + da)] = coupling;
                }
            }
        }
        let mu = DVector::from_fn(p, |i, _| 0.001 * i as f64);
        let model = EllipticalModel::with_default_labels(mu, omega, DistributionKind::Normal)
            .unwrap();
        let mut groups = BTreeMap::new();
        groups.insert("alpha".to_string(), vec![0, 1]);
        groups.insert("beta".to_string(), vec![2, 3]);
        groups.insert("gamma".to_string(), vec![4, 5]);
        (model, groups)
    }

    fn cfg(policy: StressPolicy) -> SweepConfig<'static> {
        SweepConfig {
            q: 0.95,
            policy,
            eq_l_form: EqLForm::Literal,
            panel: None,
            dataset_id: None,
        }
    }

    #[test]
    fn mi_matrix_is_exactly_symmetric_with_missing_diagonal() {
        let (model, groups) = block_model(0.2);
        let m = measure_matrix(
            &model,
            &groups,
            MeasureId::MutualInformation,
            &cfg(StressPolicy::Uniform { c: 1.0 }),
        )
        .unwrap();
        for i in 0..3 {
            assert!(m.values[i][i].is_none());
            for j in 0..3 {
                if i != j {
                    assert_eq!(m.values[i][j], m.values[j][i]);
                }
            }
        }
    }

    #[test]
    fn uncoupled_groups_have_zero_loss_mi_and_rotation() {
        let (model, groups) = block_model(0.0);
        let cfg = cfg(StressPolicy::Uniform { c: 1.0 });
        for measure in [
            MeasureId::AverageLoss,
            MeasureId::MutualInformation,
            MeasureId::Rotation,
        ] {
            let m = measure_matrix(&model, &groups, measure, &cfg).unwrap();
            assert!(m.cell_errors.is_empty(), "{:?}", m.cell_errors);
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert_relative_eq!(m.values[i][j].unwrap(), 0.0, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn uniform_stress_scales_average_loss_linearly() {
        let (model, groups) = block_model(0.25);
        let a = measure_matrix(
            &model,
            &groups,
            MeasureId::AverageLoss,
            &cfg(StressPolicy::Uniform { c: 1.0 }),
        )
        .unwrap();
        let b = measure_matrix(
            &model,
            &groups,
            MeasureId::AverageLoss,
            &cfg(StressPolicy::Uniform { c: 2.0 }),
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let (x, y) = (a.values[i][j].unwrap(), b.values[i][j].unwrap());
                    assert_relative_eq!(y, 2.0 * x, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn failed_cells_record_errors_without_aborting() {
        // Isotropic stressed blocks make the rotation degenerate everywhere.
        let (model, groups) = {
            let p = 4;
            let omega = DMatrix::identity(p, p);
            let model = EllipticalModel::with_default_labels(
                DVector::zeros(p),
                omega,
                DistributionKind::Normal,
            )
            .unwrap();
            let mut groups = BTreeMap::new();
            groups.insert("a".to_string(), vec![0, 1]);
            groups.insert("b".to_string(), vec![2, 3]);
            (model, groups)
        };
        let m = measure_matrix(
            &model,
            &groups,
            MeasureId::Rotation,
            &cfg(StressPolicy::Uniform { c: 1.0 }),
        )
        .unwrap();
        assert_eq!(m.cell_errors.len(), 2);
        assert!(m.values[0][1].is_none());
        assert!(m.cell_errors[0].message.contains("eigenvalue"));
    }

    #[test]
    fn groups_must_be_disjoint_and_at_least_two() {
        let (model, mut groups) = block_model(0.1);
        let c = cfg(StressPolicy::Uniform { c: 1.0 });
        groups.insert("overlap".to_string(), vec![0]);
        assert!(matches!(
            measure_matrix(&model, &groups, MeasureId::AverageLoss, &c),
            Err(Error::GroupsInvalid { .. })
        ));
        let mut single = BTreeMap::new();
        single.insert("only".to_string(), vec![0, 1]);
        assert!(matches!(
            measure_matrix(&model, &single, MeasureId::AverageLoss, &c),
            Err(Error::GroupsInvalid { .. })
        ));
    }

    #[test]
    fn explicit_and_parametric_policies_resolve() {
        let (model, groups) = block_model(0.2);
        let losses = DVector::from_element(6, 0.5);
        let m = measure_matrix(
            &model,
            &groups,
            MeasureId::AverageLoss,
            &cfg(StressPolicy::Explicit { losses }),
        )
        .unwrap();
        assert!(m.values[0][1].is_some());

        let m = measure_matrix(
            &model,
            &groups,
            MeasureId::CoVar,
            &cfg(StressPolicy::ParametricVar { q: 0.95 }),
        )
        .unwrap();
        assert!(m.cell_errors.is_empty());
        // CoVaR of a positively coupled pair exceeds zero under downside stress.
        assert!(m.values[0][1].unwrap() > 0.0);
    }

    #[test]
    fn one_vs_rest_directions_differ() {
        let (model, groups) = block_model(0.25);
        let ovr = one_vs_rest(
            &model,
            &groups,
            MeasureId::AverageLoss,
            &cfg(StressPolicy::Uniform { c: 1.0 }),
        )
        .unwrap();
        assert_eq!(ovr.labels.len(), 3);
        for i in 0..3 {
            assert!(ovr.group_to_rest[i].is_some());
            assert!(ovr.rest_to_group[i].is_some());
        }
        // beta couples to both alpha and gamma, the others to one group only,
        // so the directions cannot coincide.
        assert!(
            (ovr.group_to_rest[0].unwrap() - ovr.rest_to_group[0].unwrap()).abs() > 1e-12
        );
    }

    #[test]
    fn empirical_policy_requires_panel() {
        let (model, groups) = block_model(0.2);
        let err = measure_matrix(
            &model,
            &groups,
            MeasureId::AverageLoss,
            &cfg(StressPolicy::EmpiricalVar { q: 0.95 }),
        );
        assert!(matches!(err, Err(Error::InvalidParameters { .. })));
    }
}
