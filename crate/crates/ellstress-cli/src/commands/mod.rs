//! The four batch commands plus shared plumbing for resolving groups and
//! stress policies against a loaded model.

pub mod fit;
pub mod ingest;
pub mod matrix;
pub mod stress;

use std::collections::BTreeMap;

use ellstress::{EllipticalModel, ReturnPanel, StressPolicy};

use crate::config::{PolicySpec, RunConfig};
use crate::errors::{AppError, AppResult};
use crate::io;

/// Groups for the model's labels: prefer an explicit sectors file, fall
/// back to the map stored in the panel cache.
pub fn resolve_groups(
    cfg: &RunConfig,
    model: &EllipticalModel,
) -> AppResult<BTreeMap<String, Vec<usize>>> {
    let map = if let Some(sectors) = &cfg.sectors {
        io::parse_sectors_csv(sectors)?
    } else {
        let (_, meta) = io::load_panel_cache(&cfg.panel).map_err(|_| {
            AppError::input(
                "no group source available: configure `sectors` or run `ingest` to build the panel cache",
            )
        })?;
        meta.groups
    };
    let (groups, ignored) = io::groups_for_labels(model.labels(), &map)?;
    if !ignored.is_empty() {
        eprintln!(
            "warning: {} group-map entr{} match no model variable: {:?}",
            ignored.len(),
            if ignored.len() == 1 { "y" } else { "ies" },
            ignored
        );
    }
    Ok(groups)
}

/// Loads the panel cache when the stress policy needs empirical quantiles.
pub fn panel_if_needed(cfg: &RunConfig) -> AppResult<Option<ReturnPanel>> {
    match cfg.stress_policy {
        PolicySpec::EmpiricalVar => {
            let (panel, _) = io::load_panel_cache(&cfg.panel)?;
            Ok(Some(panel))
        }
        _ => Ok(None),
    }
}

/// Converts the configured policy into the library's stress policy,
/// loading the explicit loss file when one is named.
pub fn library_policy(cfg: &RunConfig, model: &EllipticalModel) -> AppResult<StressPolicy> {
    Ok(match &cfg.stress_policy {
        PolicySpec::EmpiricalVar => StressPolicy::EmpiricalVar { q: cfg.q },
        PolicySpec::ParametricVar => StressPolicy::ParametricVar { q: cfg.q },
        PolicySpec::Uniform(c) => StressPolicy::Uniform { c: *c },
        PolicySpec::Explicit(path) => StressPolicy::Explicit {
            losses: io::load_explicit_losses(path, model.labels())?,
        },
    })
}

pub fn eq_l_form_name(form: ellstress::EqLForm) -> &'static str {
    match form {
        ellstress::EqLForm::Literal => "literal",
        ellstress::EqLForm::Deviation => "deviation",
    }
}
