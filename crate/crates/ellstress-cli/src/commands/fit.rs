//! `fit`: estimate an elliptical model from the panel cache and write the
//! model document.

use crate::config::{DistChoice, RunConfig};
use crate::errors::{AppError, AppResult};
use crate::io::{
    atomic_write, load_panel_cache, model_to_doc, render_model_json, sha256_hex, FittedFrom,
};

pub fn run(cfg: &RunConfig) -> AppResult<()> {
    let (panel, meta) = load_panel_cache(&cfg.panel)?;
    let panel_bytes = std::fs::read(&cfg.panel)
        .map_err(|e| AppError::input(format!("cannot read {}: {e}", cfg.panel.display())))?;

    let model = match cfg.distribution {
        DistChoice::Normal => ellstress::fit_gaussian(&panel)?,
        DistChoice::StudentT => ellstress::fit_student_t(&panel, cfg.nu)?,
    };

    // Conditioning diagnostics on the fitted shape matrix.
    let eig = nalgebra::SymmetricEigen::new(model.omega().clone());
    let max = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    eprintln!(
        "shape matrix condition number {:.3e} (eigenvalues {:.3e} .. {:.3e})",
        max / min,
        min,
        max
    );

    let doc = model_to_doc(
        &model,
        FittedFrom {
            t: panel.n_obs(),
            date_range: meta.date_range.clone(),
            input_hash: sha256_hex(&panel_bytes),
        },
    );
    atomic_write(&cfg.model, render_model_json(&doc).as_bytes())?;
    match model.kind().nu() {
        Some(nu) => println!(
            "fitted student_t model (nu = {nu:.4}) over {} variables -> {}",
            model.dim(),
            cfg.model.display()
        ),
        None => println!(
            "fitted normal model over {} variables -> {}",
            model.dim(),
            cfg.model.display()
        ),
    }
    Ok(())
}
