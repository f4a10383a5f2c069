//! `stress`: single-pair scenario report. Conditions the stressed group on
//! the stressor group at the resolved stress vector and reports every
//! pairwise measure, recording per-measure failures without aborting the
//! rest.

use std::collections::BTreeMap;

use ellstress::{
    average_loss, axis_shrinkage, beta_factor, centroid_shift, condition,
    mutual_information, principal_rotation, resolve_stress, total_variance_ratio,
    DistributionKind, EqLForm,
};
use serde::Serialize;

use crate::commands::{eq_l_form_name, library_policy, panel_if_needed, resolve_groups};
use crate::config::RunConfig;
use crate::errors::{AppError, AppResult};
use crate::io::{atomic_write, doc_to_model, load_model_doc};

#[derive(Serialize)]
struct StressReport {
    stressor: String,
    stressed: String,
    q: f64,
    policy: String,
    eq_l_form: String,
    seed: u64,
    kind: String,
    nu: Option<f64>,
    labels_x: Vec<String>,
    labels_y: Vec<String>,
    /// Resolved per-variable stress losses (negated returns).
    stress_losses: Vec<f64>,
    d2x: Option<f64>,
    /// Conditional-centroid displacement in loss space: positive entries
    /// are extra expected losses on the stressed variables.
    centroid_shift_loss: Option<Vec<f64>>,
    measures: BTreeMap<String, Option<f64>>,
    errors: BTreeMap<String, String>,
}

pub fn run(cfg: &RunConfig, stressor: &str, stressed: &str) -> AppResult<()> {
    let model = doc_to_model(&load_model_doc(&cfg.model)?)?;
    let groups = resolve_groups(cfg, &model)?;
    let idx_x = groups
        .get(stressor)
        .ok_or_else(|| AppError::input(format!("unknown stressor group {stressor:?}")))?;
    let idx_y = groups
        .get(stressed)
        .ok_or_else(|| AppError::input(format!("unknown stressed group {stressed:?}")))?;
    if stressor == stressed {
        return Err(AppError::input("stressor and stressed group must differ"));
    }
    let part = model.partition(idx_x, idx_y)?;
    let panel = panel_if_needed(cfg)?;
    let policy = library_policy(cfg, &model)?;
    let scenario = resolve_stress(&policy, &model, idx_x, panel.as_ref())?;
    let x_point = scenario.conditioning_point();

    let mut measures: BTreeMap<String, Option<f64>> = BTreeMap::new();
    let mut errors: BTreeMap<String, String> = BTreeMap::new();
    let mut record = |name: &str, value: Result<f64, ellstress::Error>| match value {
        Ok(v) => {
            measures.insert(name.to_string(), Some(v));
        }
        Err(e) => {
            measures.insert(name.to_string(), None);
            errors.insert(name.to_string(), e.to_string());
        }
    };

    let cm = condition(&model, &part, &x_point);
    let d2x = cm.as_ref().ok().map(|cm| cm.d2x);

    let l_input = match cfg.eq_l_form {
        EqLForm::Literal => scenario.x.clone(),
        EqLForm::Deviation => &scenario.x + part.mu_x(),
    };
    record("L", average_loss(&part, &l_input));
    record("MI", mutual_information(&part));
    record("THETA", principal_rotation(&part));
    match (&cm, model.kind()) {
        (_, DistributionKind::Normal) => record("DELTA", axis_shrinkage(&part, None)),
        (Ok(cm), DistributionKind::StudentT { .. }) => {
            record("DELTA", axis_shrinkage(&part, Some(cm)))
        }
        (Err(e), _) => record("DELTA", Err(e.clone())),
    }
    match d2x {
        Some(d2) => {
            record("BETA", beta_factor(model.kind(), d2, part.p_x()));
            record("B", Ok(d2 / part.p_x() as f64));
        }
        None => {
            let e = cm.as_ref().err().unwrap().clone();
            record("BETA", Err(e.clone()));
            record("B", Err(e));
        }
    }
    match &cm {
        Ok(cm) => record("TVR", total_variance_ratio(&part, cm)),
        Err(e) => record("TVR", Err(e.clone())),
    }

    // Loss-space centroid shift: the negated return-space displacement.
    let shift_loss = match centroid_shift(&part, &x_point) {
        Ok(shift) => Some((-shift).iter().copied().collect::<Vec<f64>>()),
        Err(e) => {
            errors.insert("centroid_shift_loss".into(), e.to_string());
            None
        }
    };

    let report = StressReport {
        stressor: stressor.to_string(),
        stressed: stressed.to_string(),
        q: cfg.q,
        policy: policy.describe(),
        eq_l_form: eq_l_form_name(cfg.eq_l_form).to_string(),
        seed: cfg.seed,
        kind: model.kind().name().to_string(),
        nu: model.kind().nu(),
        labels_x: part.labels_x().to_vec(),
        labels_y: part.labels_y().to_vec(),
        stress_losses: scenario.x.iter().copied().collect(),
        d2x,
        centroid_shift_loss: shift_loss,
        measures,
        errors: errors.clone(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    let path = cfg.out.join(format!("stress_{stressor}_{stressed}.json"));
    atomic_write(&path, format!("{json}\n").as_bytes())?;
    println!("stress report {stressor} -> {stressed} written to {}", path.display());
    if !errors.is_empty() {
        return Err(AppError::Partial {
            failed: errors.len(),
        });
    }
    Ok(())
}
