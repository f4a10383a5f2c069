//! File formats: prices/sectors CSV parsing, the validated panel cache,
//! the model JSON document, and atomic output writing.
//!
//! Prices CSV: first column `date` (ISO-8601), one column per ticker,
//! mandatory header, comma-separated UTF-8. Sectors CSV: `ticker,group`.
//! Columns with missing cells are dropped with a warning; non-numeric cells
//! are parse errors with their line number.
//!
//! The panel cache is a returns CSV plus a `*_meta.json` sidecar carrying
//! the group map, the drop list and input hashes. Model JSON serializes
//! every float with 17 significant digits so a load/save cycle is
//! byte-identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ellstress::{EllipticalModel, ReturnPanel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::{AppError, AppResult};

pub const PANEL_CACHE_VERSION: u32 = 1;
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_f64_17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Writes through a temp file in the target directory and renames into
/// place, so failures never leave a partial artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| AppError::Input(format!("cannot persist {}: {e}", path.display())))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Prices and sectors CSV.
// ---------------------------------------------------------------------------

/// A parsed prices file, before conversion to returns. Columns that had
/// missing cells are already removed and listed in `dropped`.
#[derive(Debug)]
pub struct PricePanel {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    pub prices: DMatrix<f64>,
    pub dropped: Vec<String>,
}

pub fn parse_prices_csv(path: &Path) -> AppResult<PricePanel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 || headers.get(0) != Some("date") {
        return Err(AppError::input(format!(
            "{}: header must start with `date` followed by ticker columns",
            path.display()
        )));
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    {
        let mut seen = std::collections::BTreeSet::new();
        for t in &tickers {
            if !seen.insert(t) {
                return Err(AppError::input(format!(
                    "{}: duplicate ticker column {t:?}",
                    path.display()
                )));
            }
        }
    }

    let mut dates = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| {
            AppError::input(format!("{} line {line}: {e}", path.display()))
        })?;
        if record.len() != tickers.len() + 1 {
            return Err(AppError::input(format!(
                "{} line {line}: expected {} fields, got {}",
                path.display(),
                tickers.len() + 1,
                record.len()
            )));
        }
        let date_str = record.get(0).unwrap_or("");
        NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|_| {
            AppError::input(format!(
                "{} line {line}: bad ISO-8601 date {date_str:?}",
                path.display()
            ))
        })?;
        dates.push(date_str.to_string());
        let mut row = Vec::with_capacity(tickers.len());
        for (j, field) in record.iter().skip(1).enumerate() {
            let field = field.trim();
            if field.is_empty() {
                row.push(None);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    AppError::input(format!(
                        "{} line {line}: cannot parse {field:?} for ticker {} as a number",
                        path.display(),
                        tickers[j]
                    ))
                })?;
                row.push(Some(v));
            }
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(AppError::input(format!(
            "{}: need at least two price rows, got {}",
            path.display(),
            rows.len()
        )));
    }

    // Missing-data policy: drop any column with a gap, keep the rest.
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..tickers.len() {
        if rows.iter().all(|r| r[j].is_some()) {
            keep.push(j);
        } else {
            dropped.push(tickers[j].clone());
        }
    }
    if keep.is_empty() {
        return Err(AppError::input(format!(
            "{}: every column has missing values",
            path.display()
        )));
    }
    let prices = DMatrix::from_fn(rows.len(), keep.len(), |r, c| rows[r][keep[c]].unwrap());
    let kept_tickers = keep.iter().map(|&j| tickers[j].clone()).collect();
    Ok(PricePanel {
        dates,
        tickers: kept_tickers,
        prices,
        dropped,
    })
}

pub fn parse_sectors_csv(path: &Path) -> AppResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    if headers.get(0) != Some("ticker") || headers.get(1) != Some("group") {
        return Err(AppError::input(format!(
            "{}: header must be `ticker,group`",
            path.display()
        )));
    }
    let mut map = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record =
            record.map_err(|e| AppError::input(format!("{} line {line}: {e}", path.display())))?;
        let ticker = record.get(0).unwrap_or("").trim().to_string();
        let group = record.get(1).unwrap_or("").trim().to_string();
        if ticker.is_empty() || group.is_empty() {
            return Err(AppError::input(format!(
                "{} line {line}: empty ticker or group",
                path.display()
            )));
        }
        if map.insert(ticker.clone(), group).is_some() {
            return Err(AppError::input(format!(
                "{} line {line}: duplicate ticker {ticker:?}",
                path.display()
            )));
        }
    }
    Ok(map)
}

/// Group index map over an ordered label list: group names sorted
/// lexicographically (BTreeMap order), member indices in label order.
/// Returns the map plus any map entries that matched no label.
pub fn groups_for_labels(
    labels: &[String],
    map: &BTreeMap<String, String>,
) -> AppResult<(BTreeMap<String, Vec<usize>>, Vec<String>)> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut missing = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match map.get(label) {
            Some(g) => groups.entry(g.clone()).or_default().push(i),
            None => missing.push(label.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(ellstress::Error::UnmappedTicker { tickers: missing }.into());
    }
    let known: std::collections::BTreeSet<&String> = labels.iter().collect();
    let ignored = map.keys().filter(|t| !known.contains(t)).cloned().collect();
    Ok((groups, ignored))
}

// ---------------------------------------------------------------------------
// Panel cache.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelMeta {
    pub version: u32,
    pub t: usize,
    pub p: usize,
    pub date_range: (String, String),
    pub groups: BTreeMap<String, String>,
    pub dropped: Vec<String>,
    pub prices_sha256: String,
    pub sectors_sha256: String,
}

pub fn panel_meta_path(panel_path: &Path) -> PathBuf {
    let stem = panel_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "panel".to_string());
    panel_path.with_file_name(format!("{stem}_meta.json"))
}

/// Serializes the returns panel as CSV (shortest round-trip float format).
pub fn render_panel_csv(dates: &[String], tickers: &[String], returns: &DMatrix<f64>) -> String {
    let mut out = String::new();
    out.push_str("date");
    for t in tickers {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for (r, date) in dates.iter().enumerate() {
        out.push_str(date);
        for c in 0..returns.ncols() {
            out.push(',');
            out.push_str(&format!("{}", returns[(r, c)]));
        }
        out.push('\n');
    }
    out
}

pub fn write_panel_cache(
    panel_path: &Path,
    dates: &[String],
    tickers: &[String],
    returns: &DMatrix<f64>,
    meta: &PanelMeta,
) -> AppResult<()> {
    let csv = render_panel_csv(dates, tickers, returns);
    atomic_write(panel_path, csv.as_bytes())?;
    let meta_json = serde_json::to_string_pretty(meta)?;
    atomic_write(&panel_meta_path(panel_path), format!("{meta_json}\n").as_bytes())?;
    Ok(())
}

pub fn load_panel_cache(panel_path: &Path) -> AppResult<(ReturnPanel, PanelMeta)> {
    let meta_path = panel_meta_path(panel_path);
    let meta: PanelMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path).map_err(
        |e| AppError::input(format!("cannot read {}: {e} (run `ingest` first)", meta_path.display())),
    )?)?;
    if meta.version != PANEL_CACHE_VERSION {
        return Err(AppError::input(format!(
            "panel cache version {} unsupported (expected {PANEL_CACHE_VERSION})",
            meta.version
        )));
    }
    let text = std::fs::read_to_string(panel_path)
        .map_err(|e| AppError::input(format!("cannot read {}: {e}", panel_path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| AppError::input(format!("{}: {e}", panel_path.display())))?;
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record
            .map_err(|e| AppError::input(format!("{} line {line}: {e}", panel_path.display())))?;
        dates.push(record.get(0).unwrap_or("").to_string());
        for field in record.iter().skip(1) {
            values.push(field.parse::<f64>().map_err(|_| {
                AppError::input(format!(
                    "{} line {line}: bad return value {field:?}",
                    panel_path.display()
                ))
            })?);
        }
    }
    let returns = DMatrix::from_row_slice(dates.len(), tickers.len(), &values);
    let panel = ReturnPanel::new(dates, tickers, returns, Some(meta.groups.clone()))?;
    Ok((panel, meta))
}

// ---------------------------------------------------------------------------
// Model JSON.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedFrom {
    pub t: usize,
    pub date_range: (String, String),
    pub input_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub version: u32,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub labels: Vec<String>,
    pub mu: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    pub fitted_from: FittedFrom,
}

fn escape_json(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

fn string_array(items: &[String]) -> String {
    let inner: Vec<String> = items.iter().map(|s| format!("\"{}\"", escape_json(s))).collect();
    format!("[{}]", inner.join(", "))
}

fn f64_array(items: &[f64]) -> String {
    let inner: Vec<String> = items.iter().map(|&v| fmt_f64_17(v)).collect();
    format!("[{}]", inner.join(", "))
}

/// Renders the model document with 17-significant-digit floats in a fixed
/// key order, so loading and re-saving a model is byte-identical.
pub fn render_model_json(doc: &ModelDoc) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"version\": {},\n", doc.version));
    out.push_str(&format!("  \"kind\": \"{}\",\n", escape_json(&doc.kind)));
    if let Some(nu) = doc.nu {
        out.push_str(&format!("  \"nu\": {},\n", fmt_f64_17(nu)));
    }
    out.push_str(&format!("  \"labels\": {},\n", string_array(&doc.labels)));
    out.push_str(&format!("  \"mu\": {},\n", f64_array(&doc.mu)));
    out.push_str("  \"omega\": [\n");
    for (i, row) in doc.omega.iter().enumerate() {
        let sep = if i + 1 < doc.omega.len() { "," } else { "" };
        out.push_str(&format!("    {}{sep}\n", f64_array(row)));
    }
    out.push_str("  ],\n");
    out.push_str("  \"fitted_from\": {\n");
    out.push_str(&format!("    \"t\": {},\n", doc.fitted_from.t));
    out.push_str(&format!(
        "    \"date_range\": [\"{}\", \"{}\"],\n",
        escape_json(&doc.fitted_from.date_range.0),
        escape_json(&doc.fitted_from.date_range.1)
    ));
    out.push_str(&format!(
        "    \"input_hash\": \"{}\"\n",
        escape_json(&doc.fitted_from.input_hash)
    ));
    out.push_str("  }\n");
    out.push_str("}\n");
    out
}

pub fn model_to_doc(model: &EllipticalModel, fitted_from: FittedFrom) -> ModelDoc {
    let p = model.dim();
    ModelDoc {
        version: MODEL_SCHEMA_VERSION,
        kind: model.kind().name().to_string(),
        nu: model.kind().nu(),
        labels: model.labels().to_vec(),
        mu: model.mu().iter().copied().collect(),
        omega: (0..p)
            .map(|i| (0..p).map(|j| model.omega()[(i, j)]).collect())
            .collect(),
        fitted_from,
    }
}

pub fn load_model_doc(path: &Path) -> AppResult<ModelDoc> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("cannot read {}: {e} (run `fit` first)", path.display())))?;
    let doc: ModelDoc = serde_json::from_str(&text)?;
    if doc.version != MODEL_SCHEMA_VERSION {
        return Err(AppError::input(format!(
            "model schema version {} unsupported (expected {MODEL_SCHEMA_VERSION})",
            doc.version
        )));
    }
    Ok(doc)
}

pub fn doc_to_model(doc: &ModelDoc) -> AppResult<EllipticalModel> {
    let kind = match doc.kind.as_str() {
        "normal" => ellstress::DistributionKind::Normal,
        "student_t" => {
            let nu = doc
                .nu
                .ok_or_else(|| AppError::input("student_t model file is missing `nu`"))?;
            ellstress::DistributionKind::StudentT { nu }
        }
        other => return Err(AppError::input(format!("unknown model kind {other:?}"))),
    };
    let p = doc.labels.len();
    if doc.mu.len() != p || doc.omega.len() != p || doc.omega.iter().any(|r| r.len() != p) {
        return Err(AppError::input(
            "model file dimensions disagree between labels, mu and omega",
        ));
    }
    let mu = DVector::from_column_slice(&doc.mu);
    let omega = DMatrix::from_fn(p, p, |i, j| doc.omega[i][j]);
    Ok(EllipticalModel::new(mu, omega, kind, doc.labels.clone())?)
}

/// Loads an explicit stress file (`ticker,loss` CSV) as a loss vector in
/// model label order. Every label must be covered.
pub fn load_explicit_losses(path: &Path, labels: &[String]) -> AppResult<DVector<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    if headers.get(0) != Some("ticker") || headers.get(1) != Some("loss") {
        return Err(AppError::input(format!(
            "{}: header must be `ticker,loss`",
            path.display()
        )));
    }
    let mut map = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record =
            record.map_err(|e| AppError::input(format!("{} line {line}: {e}", path.display())))?;
        let ticker = record.get(0).unwrap_or("").trim().to_string();
        let loss: f64 = record.get(1).unwrap_or("").trim().parse().map_err(|_| {
            AppError::input(format!("{} line {line}: bad loss value", path.display()))
        })?;
        map.insert(ticker, loss);
    }
    let mut missing = Vec::new();
    let mut out = DVector::zeros(labels.len());
    for (i, label) in labels.iter().enumerate() {
        match map.get(label) {
            Some(&v) => out[i] = v,
            None => missing.push(label.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(AppError::input(format!(
            "{}: no stress loss for tickers {missing:?}",
            path.display()
        )));
    }
    Ok(out)
}
