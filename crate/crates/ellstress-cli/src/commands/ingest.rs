//! `ingest`: parse and validate the prices and sectors files, compute
//! log-returns, and write the panel cache plus a summary report.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::RunConfig;
use crate::errors::{AppError, AppResult};
use crate::io::{
    atomic_write, parse_prices_csv, parse_sectors_csv, sha256_hex, write_panel_cache, PanelMeta,
    PANEL_CACHE_VERSION,
};

#[derive(Serialize)]
struct IngestSummary {
    t: usize,
    p: usize,
    date_range: (String, String),
    dropped_columns: Vec<String>,
    group_sizes: BTreeMap<String, usize>,
    panel: String,
    prices_sha256: String,
    sectors_sha256: String,
}

pub fn run(cfg: &RunConfig) -> AppResult<()> {
    let prices_path = cfg.require_prices()?;
    let sectors_path = cfg.require_sectors()?;
    let prices_bytes = std::fs::read(prices_path)
        .map_err(|e| AppError::input(format!("cannot read {}: {e}", prices_path.display())))?;
    let sectors_bytes = std::fs::read(sectors_path)
        .map_err(|e| AppError::input(format!("cannot read {}: {e}", sectors_path.display())))?;

    let parsed = parse_prices_csv(prices_path)?;
    if !parsed.dropped.is_empty() {
        eprintln!(
            "warning: dropped {} column(s) with missing prices: {:?}",
            parsed.dropped.len(),
            parsed.dropped
        );
    }

    let returns = ellstress::log_returns(&parsed.prices).map_err(|e| match e {
        ellstress::Error::NonPositivePrice { row, col, value } => AppError::input(format!(
            "non-positive price {value} for ticker {} on {} ({} line {})",
            parsed.tickers[col],
            parsed.dates[row],
            prices_path.display(),
            row + 2,
        )),
        other => AppError::from(other),
    })?;
    // Return r is dated by the later observation of each pair.
    let return_dates: Vec<String> = parsed.dates[1..].to_vec();

    let sector_map = parse_sectors_csv(sectors_path)?;
    let mut unmapped = Vec::new();
    let mut group_sizes: BTreeMap<String, usize> = BTreeMap::new();
    for t in &parsed.tickers {
        match sector_map.get(t) {
            Some(g) => *group_sizes.entry(g.clone()).or_insert(0) += 1,
            None => unmapped.push(t.clone()),
        }
    }
    if !unmapped.is_empty() {
        return Err(ellstress::Error::UnmappedTicker { tickers: unmapped }.into());
    }
    let extras: Vec<&String> = sector_map
        .keys()
        .filter(|t| !parsed.tickers.contains(t))
        .collect();
    if !extras.is_empty() {
        eprintln!(
            "warning: {} sector entr{} match no price column: {extras:?}",
            extras.len(),
            if extras.len() == 1 { "y" } else { "ies" }
        );
    }
    // Keep only the tickers that survived into the panel.
    let groups: BTreeMap<String, String> = parsed
        .tickers
        .iter()
        .map(|t| (t.clone(), sector_map[t].clone()))
        .collect();

    let meta = PanelMeta {
        version: PANEL_CACHE_VERSION,
        t: returns.nrows(),
        p: returns.ncols(),
        date_range: (
            return_dates.first().cloned().unwrap_or_default(),
            return_dates.last().cloned().unwrap_or_default(),
        ),
        groups,
        dropped: parsed.dropped.clone(),
        prices_sha256: sha256_hex(&prices_bytes),
        sectors_sha256: sha256_hex(&sectors_bytes),
    };
    write_panel_cache(&cfg.panel, &return_dates, &parsed.tickers, &returns, &meta)?;

    let summary = IngestSummary {
        t: meta.t,
        p: meta.p,
        date_range: meta.date_range.clone(),
        dropped_columns: meta.dropped.clone(),
        group_sizes,
        panel: cfg.panel.display().to_string(),
        prices_sha256: meta.prices_sha256.clone(),
        sectors_sha256: meta.sectors_sha256.clone(),
    };
    let json = serde_json::to_string_pretty(&summary)?;
    atomic_write(&cfg.out.join("ingest_summary.json"), format!("{json}\n").as_bytes())?;
    println!(
        "ingested {} observations x {} tickers ({} groups) -> {}",
        summary.t,
        summary.p,
        summary.group_sizes.len(),
        cfg.panel.display()
    );
    Ok(())
}
