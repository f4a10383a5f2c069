//! `matrix`: evaluate every requested measure over all ordered group pairs,
//! emit one CSV and one JSON per measure plus the one-vs-rest vectors, and a
//! diagnostics block with the cross-measure correlations.
//!
//! All outputs are rendered in memory first and written atomically at the
//! end, so a failing sweep leaves no partial artifacts.

use std::collections::BTreeMap;

use ellstress::{
    measure_matrix, offdiag_pearson, one_vs_rest, MeasureId, MeasureMatrix, OneVsRest,
    SweepConfig,
};
use serde::Serialize;

use crate::commands::{eq_l_form_name, library_policy, panel_if_needed, resolve_groups};
use crate::config::RunConfig;
use crate::errors::{AppError, AppResult};
use crate::io::{atomic_write, doc_to_model, load_model_doc, load_panel_cache};

#[derive(Serialize)]
struct CellErrorDoc {
    row: usize,
    col: usize,
    row_label: String,
    col_label: String,
    message: String,
}

#[derive(Serialize)]
struct MatrixDoc {
    measure: String,
    q: f64,
    kind: String,
    nu: Option<f64>,
    policy: String,
    eq_l_form: String,
    seed: u64,
    dataset_id: Option<String>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    /// Rows are the stressor (conditioning) groups; diagonal cells are null.
    values: Vec<Vec<Option<f64>>>,
    cell_errors: Vec<CellErrorDoc>,
}

#[derive(Serialize)]
struct DiagnosticsDoc {
    groups: usize,
    measures: Vec<String>,
    failed_cells: usize,
    correlations: BTreeMap<String, Option<f64>>,
}

fn csv_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn render_matrix_csv(m: &MeasureMatrix) -> String {
    let mut out = String::from("stressor");
    for label in &m.col_labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for (i, label) in m.row_labels.iter().enumerate() {
        out.push_str(label);
        for j in 0..m.col_labels.len() {
            out.push(',');
            out.push_str(&csv_cell(m.values[i][j]));
        }
        out.push('\n');
    }
    out
}

fn render_one_vs_rest_csv(o: &OneVsRest) -> String {
    let mut out = String::from("group,group_to_rest,rest_to_group\n");
    for (i, label) in o.labels.iter().enumerate() {
        out.push_str(&format!(
            "{label},{},{}\n",
            csv_cell(o.group_to_rest[i]),
            csv_cell(o.rest_to_group[i])
        ));
    }
    out
}

fn matrix_doc(cfg: &RunConfig, m: &MeasureMatrix) -> MatrixDoc {
    MatrixDoc {
        measure: m.measure.code().to_string(),
        q: m.metadata.q,
        kind: m.metadata.kind.clone(),
        nu: m.metadata.nu,
        policy: m.metadata.policy.clone(),
        eq_l_form: eq_l_form_name(cfg.eq_l_form).to_string(),
        seed: cfg.seed,
        dataset_id: m.metadata.dataset_id.clone(),
        row_labels: m.row_labels.clone(),
        col_labels: m.col_labels.clone(),
        values: m.values.clone(),
        cell_errors: m
            .cell_errors
            .iter()
            .map(|c| CellErrorDoc {
                row: c.row,
                col: c.col,
                row_label: m.row_labels[c.row].clone(),
                col_label: m.col_labels[c.col].clone(),
                message: c.message.clone(),
            })
            .collect(),
    }
}

pub fn run(cfg: &RunConfig) -> AppResult<()> {
    let model = doc_to_model(&load_model_doc(&cfg.model)?)?;
    let groups = resolve_groups(cfg, &model)?;
    let panel = panel_if_needed(cfg)?;
    let policy = library_policy(cfg, &model)?;
    // A short input fingerprint so emitted artifacts say what they ran on.
    let dataset_id = load_panel_cache(&cfg.panel)
        .ok()
        .map(|(_, meta)| meta.prices_sha256[..12].to_string());

    let sweep = SweepConfig {
        q: cfg.q,
        policy,
        eq_l_form: cfg.eq_l_form,
        panel: panel.as_ref(),
        dataset_id,
    };

    let mut matrices: Vec<(MeasureId, MeasureMatrix)> = Vec::new();
    let mut vectors: Vec<OneVsRest> = Vec::new();
    for &measure in &cfg.measures {
        matrices.push((measure, measure_matrix(&model, &groups, measure, &sweep)?));
        vectors.push(one_vs_rest(&model, &groups, measure, &sweep)?);
    }
    let find = |id: MeasureId| matrices.iter().find(|(m, _)| *m == id).map(|(_, v)| v);

    let failed_cells: usize = matrices.iter().map(|(_, m)| m.cell_errors.len()).sum::<usize>()
        + vectors.iter().map(|v| v.cell_errors.len()).sum::<usize>();

    let mut correlations = BTreeMap::new();
    let pairs = [
        ("L_vs_MI", MeasureId::AverageLoss, MeasureId::MutualInformation),
        ("THETA_vs_MI", MeasureId::Rotation, MeasureId::MutualInformation),
        ("L_vs_THETA", MeasureId::AverageLoss, MeasureId::Rotation),
    ];
    for (name, a, b) in pairs {
        if let (Some(ma), Some(mb)) = (find(a), find(b)) {
            correlations.insert(name.to_string(), offdiag_pearson(ma, mb));
        }
    }
    let diagnostics = DiagnosticsDoc {
        groups: groups.len(),
        measures: cfg.measures.iter().map(|m| m.code().to_string()).collect(),
        failed_cells,
        correlations,
    };

    let diagnostics_json = serde_json::to_string_pretty(&diagnostics)?;

    // Everything computed; now write.
    for (measure, m) in &matrices {
        let csv = render_matrix_csv(m);
        atomic_write(&cfg.out.join(format!("matrix_{}.csv", measure.code())), csv.as_bytes())?;
        let json = serde_json::to_string_pretty(&matrix_doc(cfg, m))?;
        atomic_write(
            &cfg.out.join(format!("matrix_{}.json", measure.code())),
            format!("{json}\n").as_bytes(),
        )?;
    }
    for o in &vectors {
        let csv = render_one_vs_rest_csv(o);
        atomic_write(
            &cfg.out.join(format!("one_vs_rest_{}.csv", o.measure.code())),
            csv.as_bytes(),
        )?;
    }
    atomic_write(
        &cfg.out.join("diagnostics.json"),
        format!("{diagnostics_json}\n").as_bytes(),
    )?;

    println!(
        "wrote {} measure matrix(es) over {} groups to {}",
        matrices.len(),
        groups.len(),
        cfg.out.display()
    );
    if failed_cells > 0 {
        return Err(AppError::Partial {
            failed: failed_cells,
        });
    }
    Ok(())
}
