//! Run configuration: a TOML config file, `ELLSTRESS_*` environment
//! overrides, and command-line flag overrides, merged in that order
//! (flags win over env, env wins over the file, the file over defaults).

use std::path::{Path, PathBuf};

use ellstress::{EqLForm, MeasureId};
use serde::Deserialize;

use crate::errors::{AppError, AppResult};

pub const ENV_PREFIX: &str = "ELLSTRESS_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistChoice {
    Normal,
    StudentT,
}

impl DistChoice {
    pub fn parse(s: &str) -> AppResult<Self> {
        match s {
            "normal" => Ok(DistChoice::Normal),
            "student_t" => Ok(DistChoice::StudentT),
            other => Err(AppError::input(format!(
                "unknown distribution {other:?}; expected \"normal\" or \"student_t\""
            ))),
        }
    }
}

/// Stress policy as configured (quantile-level policies pick up `q` from the
/// run configuration at resolution time).
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    EmpiricalVar,
    ParametricVar,
    Uniform(f64),
    Explicit(PathBuf),
}

impl PolicySpec {
    pub fn parse(s: &str) -> AppResult<Self> {
        if s == "empirical-var" {
            return Ok(PolicySpec::EmpiricalVar);
        }
        if s == "parametric-var" {
            return Ok(PolicySpec::ParametricVar);
        }
        if let Some(rest) = s.strip_prefix("uniform:") {
            let c: f64 = rest.parse().map_err(|_| {
                AppError::input(format!("bad uniform stress constant {rest:?}"))
            })?;
            return Ok(PolicySpec::Uniform(c));
        }
        if let Some(rest) = s.strip_prefix("explicit:") {
            return Ok(PolicySpec::Explicit(PathBuf::from(rest)));
        }
        Err(AppError::input(format!(
            "unknown stress policy {s:?}; expected empirical-var, parametric-var, uniform:<c> or explicit:<path>"
        )))
    }
}

fn parse_measures(s: &str) -> AppResult<Vec<MeasureId>> {
    let mut out = Vec::new();
    for code in s.split(',').map(str::trim).filter(|c| !c.is_empty()) {
        let m = MeasureId::parse(code).ok_or_else(|| {
            AppError::input(format!(
                "unknown measure {code:?}; expected a comma list of L, MI, THETA, DELTA, B, TVR, COVAR"
            ))
        })?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(AppError::input("measure list is empty"));
    }
    Ok(out)
}

fn parse_eq_l_form(s: &str) -> AppResult<EqLForm> {
    match s {
        "literal" => Ok(EqLForm::Literal),
        "deviation" => Ok(EqLForm::Deviation),
        other => Err(AppError::input(format!(
            "unknown eq-l-form {other:?}; expected \"literal\" or \"deviation\""
        ))),
    }
}

/// The raw TOML file shape; every key optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    prices: Option<String>,
    sectors: Option<String>,
    panel: Option<String>,
    model: Option<String>,
    out: Option<String>,
    distribution: Option<String>,
    nu: Option<f64>,
    q: Option<f64>,
    stress_policy: Option<String>,
    measures: Option<Vec<String>>,
    seed: Option<u64>,
    eq_l_form: Option<String>,
}

/// Flag-level overrides, filled by clap in `main`.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub prices: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dist: Option<String>,
    pub nu: Option<f64>,
    pub q: Option<f64>,
    pub stress_policy: Option<String>,
    pub measures: Option<String>,
    pub seed: Option<u64>,
    pub eq_l_form: Option<String>,
}

/// The fully merged run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub panel: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
    pub distribution: DistChoice,
    pub nu: Option<f64>,
    pub q: f64,
    pub stress_policy: PolicySpec,
    pub measures: Vec<MeasureId>,
    pub seed: u64,
    pub eq_l_form: EqLForm,
}

fn env_var(key: &str) -> Option<String> {
    std::env::var(format!("{ENV_PREFIX}{key}")).ok()
}

impl RunConfig {
    pub fn load(config_path: Option<&Path>, flags: &Overrides) -> AppResult<Self> {
        let file: FileConfig = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    AppError::input(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| AppError::input(format!("bad config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };

        // String-valued keys resolve as flag > env > file.
        let pick = |flag: &Option<String>, env_key: &str, file_val: &Option<String>| {
            flag.clone().or_else(|| env_var(env_key)).or_else(|| file_val.clone())
        };
        let pick_path = |flag: &Option<PathBuf>, env_key: &str, file_val: &Option<String>| {
            flag.clone()
                .or_else(|| env_var(env_key).map(PathBuf::from))
                .or_else(|| file_val.as_ref().map(PathBuf::from))
        };

        let out = pick_path(&flags.out, "OUT", &file.out).unwrap_or_else(|| PathBuf::from("out"));

        let distribution = match pick(&flags.dist, "DIST", &file.distribution) {
            Some(s) => DistChoice::parse(&s)?,
            None => DistChoice::Normal,
        };

        let nu = match (flags.nu, env_var("NU"), file.nu) {
            (Some(v), _, _) => Some(v),
            (None, Some(s), _) => Some(
                s.parse::<f64>()
                    .map_err(|_| AppError::input(format!("bad {ENV_PREFIX}NU value {s:?}")))?,
            ),
            (None, None, v) => v,
        };

        let q = match (flags.q, env_var("Q"), file.q) {
            (Some(v), _, _) => v,
            (None, Some(s), _) => s
                .parse::<f64>()
                .map_err(|_| AppError::input(format!("bad {ENV_PREFIX}Q value {s:?}")))?,
            (None, None, v) => v.unwrap_or(0.95),
        };
        if !(q > 0.0 && q < 1.0) {
            return Err(AppError::input(format!("q must lie in (0, 1), got {q}")));
        }

        let stress_policy = match pick(&flags.stress_policy, "STRESS_POLICY", &file.stress_policy)
        {
            Some(s) => PolicySpec::parse(&s)?,
            None => PolicySpec::EmpiricalVar,
        };

        let measures = match (
            &flags.measures,
            env_var("MEASURES"),
            file.measures.as_ref(),
        ) {
            (Some(s), _, _) => parse_measures(s)?,
            (None, Some(s), _) => parse_measures(&s)?,
            (None, None, Some(list)) => parse_measures(&list.join(","))?,
            (None, None, None) => MeasureId::ALL.to_vec(),
        };

        let seed = match (flags.seed, env_var("SEED"), file.seed) {
            (Some(v), _, _) => v,
            (None, Some(s), _) => s
                .parse::<u64>()
                .map_err(|_| AppError::input(format!("bad {ENV_PREFIX}SEED value {s:?}")))?,
            (None, None, v) => v.unwrap_or(42),
        };

        let eq_l_form = match pick(&flags.eq_l_form, "EQ_L_FORM", &file.eq_l_form) {
            Some(s) => parse_eq_l_form(&s)?,
            None => EqLForm::Literal,
        };

        Ok(RunConfig {
            prices: pick_path(&flags.prices, "PRICES", &file.prices),
            sectors: pick_path(&flags.sectors, "SECTORS", &file.sectors),
            panel: pick_path(&flags.panel, "PANEL", &file.panel)
                .unwrap_or_else(|| out.join("panel.csv")),
            model: pick_path(&flags.model, "MODEL", &file.model)
                .unwrap_or_else(|| out.join("model.json")),
            out,
            distribution,
            nu,
            q,
            stress_policy,
            measures,
            seed,
            eq_l_form,
        })
    }

    pub fn require_prices(&self) -> AppResult<&Path> {
        self.prices
            .as_deref()
            .ok_or_else(|| AppError::input("no prices file configured (set `prices` or --prices)"))
    }

    pub fn require_sectors(&self) -> AppResult<&Path> {
        self.sectors
            .as_deref()
            .ok_or_else(|| AppError::input("no sectors file configured (set `sectors` or --sectors)"))
    }
}
