//! Fitting elliptical models from return panels: log-return transforms,
//! location/covariance estimation, Student-t degrees-of-freedom fitting by
//! kurtosis moment matching, empirical VaR vectors, and sector grouping.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{validate_spd, DistributionKind, EllipticalModel};

/// Bounds for the moment-matched Student-t degrees of freedom. The lower
/// bound keeps clear of the kurtosis pole at nu = 4; the upper bound caps
/// near-Gaussian blowup.
pub const NU_CLAMP: (f64, f64) = (4.5, 50.0);

/// A date-indexed matrix of log-returns with ticker labels and an optional
/// ticker-to-group map. Rows are observations, columns are tickers.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    dates: Vec<String>,
    tickers: Vec<String>,
    returns: DMatrix<f64>,
    groups: Option<BTreeMap<String, String>>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<String>,
        tickers: Vec<String>,
        returns: DMatrix<f64>,
        groups: Option<BTreeMap<String, String>>,
    ) -> Result<Self> {
        if returns.nrows() != dates.len() {
            return Err(Error::DimensionMismatch {
                context: "ReturnPanel dates",
                expected: returns.nrows(),
                got: dates.len(),
            });
        }
        if returns.ncols() != tickers.len() {
            return Err(Error::DimensionMismatch {
                context: "ReturnPanel tickers",
                expected: returns.ncols(),
                got: tickers.len(),
            });
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InternalConsistency {
                what: "return panel contains non-finite values".into(),
            });
        }
        Ok(Self {
            dates,
            tickers,
            returns,
            groups,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.returns.ncols()
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn groups(&self) -> Option<&BTreeMap<String, String>> {
        self.groups.as_ref()
    }

    fn require_enough_observations(&self) -> Result<()> {
        let needed = self.n_vars() + 2;
        if self.n_obs() < needed {
            return Err(Error::InsufficientData {
                needed,
                got: self.n_obs(),
            });
        }
        Ok(())
    }
}

/// Log-returns of a positive price matrix: `r[t][i] = ln(p[t+1][i] / p[t][i])`.
pub fn log_returns(prices: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if prices.nrows() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: prices.nrows(),
        });
    }
    for t in 0..prices.nrows() {
        for i in 0..prices.ncols() {
            let v = prices[(t, i)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositivePrice {
                    row: t,
                    col: i,
                    value: v,
                });
            }
        }
    }
    Ok(DMatrix::from_fn(prices.nrows() - 1, prices.ncols(), |t, i| {
        (prices[(t + 1, i)] / prices[(t, i)]).ln()
    }))
}

fn column_means(returns: &DMatrix<f64>) -> DVector<f64> {
    let t = returns.nrows() as f64;
    DVector::from_fn(returns.ncols(), |j, _| returns.column(j).sum() / t)
}

/// Sample covariance with the unbiased 1/(T-1) normalization.
fn sample_covariance(returns: &DMatrix<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let t = returns.nrows();
    let p = returns.ncols();
    let centered = DMatrix::from_fn(t, p, |r, c| returns[(r, c)] - mu[c]);
    let mut cov = centered.transpose() * &centered;
    cov /= (t - 1) as f64;
    cov
}

/// On a rank-deficient sample covariance, names the most collinear column
/// pair so the user can see which inputs to drop.
fn most_collinear_pair(cov: &DMatrix<f64>, tickers: &[String]) -> Error {
    let p = cov.nrows();
    let mut best = (0usize, 1usize.min(p - 1), 0.0f64);
    for i in 0..p {
        for j in (i + 1)..p {
            let denom = (cov[(i, i)] * cov[(j, j)]).sqrt();
            if denom <= 0.0 {
                continue;
            }
            let corr = cov[(i, j)] / denom;
            if corr.abs() > best.2.abs() {
                best = (i, j, corr);
            }
        }
    }
    Error::RankDeficient {
        a: tickers[best.0].clone(),
        b: tickers[best.1].clone(),
        corr: best.2,
    }
}

/// Fits a multivariate normal: column means and unbiased sample covariance
/// (which is also the shape matrix for the normal).
pub fn fit_gaussian(panel: &ReturnPanel) -> Result<EllipticalModel> {
    panel.require_enough_observations()?;
    let mu = column_means(panel.returns());
    let cov = sample_covariance(panel.returns(), &mu);
    if validate_spd(&cov).is_err() {
        return Err(most_collinear_pair(&cov, panel.tickers()));
    }
    EllipticalModel::new(
        mu,
        cov,
        DistributionKind::Normal,
        panel.tickers().to_vec(),
    )
}

/// Mean excess kurtosis across columns, using plain central moments.
pub fn mean_excess_kurtosis(returns: &DMatrix<f64>) -> f64 {
    let mu = column_means(returns);
    let t = returns.nrows() as f64;
    let p = returns.ncols();
    let mut total = 0.0;
    for j in 0..p {
        let (mut m2, mut m4) = (0.0, 0.0);
        for i in 0..returns.nrows() {
            let d = returns[(i, j)] - mu[j];
            m2 += d * d;
            m4 += d * d * d * d;
        }
        m2 /= t;
        m4 /= t;
        total += m4 / (m2 * m2) - 3.0;
    }
    total / p as f64
}

/// Fits a multivariate Student-t. The location is the column means and the
/// covariance the unbiased sample covariance; the shape matrix is then
/// `(nu - 2) / nu` times the covariance so that the model's implied
/// covariance reproduces the sample one exactly.
///
/// When `nu` is not supplied it is estimated by moment matching on the mean
/// per-column excess kurtosis (a Student-t marginal has excess kurtosis
/// `6 / (nu - 4)` for `nu > 4`), clamped to [`NU_CLAMP`].
pub fn fit_student_t(panel: &ReturnPanel, nu: Option<f64>) -> Result<EllipticalModel> {
    panel.require_enough_observations()?;
    let nu = match nu {
        Some(nu) => {
            if !(nu > 2.0) || !nu.is_finite() {
                return Err(Error::InvalidNu { nu });
            }
            nu
        }
        None => {
            let kappa = mean_excess_kurtosis(panel.returns());
            if kappa <= 0.0 {
                return Err(Error::KurtosisTooLow { mean_excess: kappa });
            }
            (4.0 + 6.0 / kappa).clamp(NU_CLAMP.0, NU_CLAMP.1)
        }
    };
    let mu = column_means(panel.returns());
    let cov = sample_covariance(panel.returns(), &mu);
    let omega = &cov * ((nu - 2.0) / nu);
    if validate_spd(&omega).is_err() {
        return Err(most_collinear_pair(&cov, panel.tickers()));
    }
    EllipticalModel::new(
        mu,
        omega,
        DistributionKind::StudentT { nu },
        panel.tickers().to_vec(),
    )
}

/// Linear-interpolation quantile between order statistics (the common
/// "type 7" convention): `h = (n - 1) q`, interpolate between the floor and
/// ceiling order statistics.
pub fn quantile_type7(values: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQuantile { q });
    }
    if values.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Per-variable empirical VaR losses at level `q`: the negated lower-tail
/// `(1 - q)` return quantile, floored at zero so results read as loss
/// magnitudes.
pub fn empirical_var_vector(panel: &ReturnPanel, idx: &[usize], q: f64) -> Result<DVector<f64>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQuantile { q });
    }
    let mut out = DVector::zeros(idx.len());
    for (k, &i) in idx.iter().enumerate() {
        if i >= panel.n_vars() {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: panel.n_vars(),
            });
        }
        let col: Vec<f64> = panel.returns().column(i).iter().copied().collect();
        out[k] = (-quantile_type7(&col, 1.0 - q)?).max(0.0);
    }
    Ok(out)
}

/// Group map resolution: group names sorted lexicographically, member
/// indices in panel column order. Map entries for tickers not present in the
/// panel are collected in `ignored` for the caller to warn about.
#[derive(Debug, Clone)]
pub struct GroupIndices {
    pub groups: BTreeMap<String, Vec<usize>>,
    pub ignored: Vec<String>,
}

pub fn group_indices(panel: &ReturnPanel) -> Result<GroupIndices> {
    let map = panel.groups().ok_or(Error::NoGroups)?;
    let mut missing = Vec::new();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, ticker) in panel.tickers().iter().enumerate() {
        match map.get(ticker) {
            Some(group) => groups.entry(group.clone()).or_default().push(i),
            None => missing.push(ticker.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnmappedTicker { tickers: missing });
    }
    let known: std::collections::BTreeSet<&String> = panel.tickers().iter().collect();
    let ignored = map
        .keys()
        .filter(|t| !known.contains(t))
        .cloned()
        .collect();
    Ok(GroupIndices { groups, ignored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn panel_from_returns(returns: DMatrix<f64>) -> ReturnPanel {
        let t = returns.nrows();
        let p = returns.ncols();
        let dates = (0..t).map(|i| format!("d{i}")).collect();
        let tickers = (0..p).map(|i| format!("T{i}")).collect();
        ReturnPanel::new(dates, tickers, returns, None).unwrap()
    }

    #[test]
    fn log_returns_constant_prices_are_zero() {
        let prices = DMatrix::from_element(5, 2, 42.0);
        let r = log_returns(&prices).unwrap();
        assert_eq!(r.nrows(), 4);
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn log_returns_doubling_is_ln_two() {
        let prices = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let r = log_returns(&prices).unwrap();
        assert_relative_eq!(r[(0, 0)], std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn log_returns_hand_panel() {
        // Hand-computed 3x2 panel.
        let prices = DMatrix::from_row_slice(3, 2, &[100.0, 50.0, 110.0, 45.0, 99.0, 54.0]);
        let r = log_returns(&prices).unwrap();
        assert_relative_eq!(r[(0, 0)], (110.0f64 / 100.0).ln(), epsilon = 1e-15);
        assert_relative_eq!(r[(0, 1)], (45.0f64 / 50.0).ln(), epsilon = 1e-15);
        assert_relative_eq!(r[(1, 0)], (99.0f64 / 110.0).ln(), epsilon = 1e-15);
        assert_relative_eq!(r[(1, 1)], (54.0f64 / 45.0).ln(), epsilon = 1e-15);
    }

    #[test]
    fn log_returns_reports_bad_cell() {
        let prices = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -3.0]);
        match log_returns(&prices) {
            Err(Error::NonPositivePrice { row, col, value }) => {
                assert_eq!((row, col), (1, 1));
                assert_eq!(value, -3.0);
            }
            other => panic!("expected NonPositivePrice, got {other:?}"),
        }
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let mut returns = DMatrix::zeros(10, 3);
        for i in 0..10 {
            let v = (i as f64).sin();
            returns[(i, 0)] = v;
            returns[(i, 1)] = v; // exact duplicate
            returns[(i, 2)] = (i as f64).cos();
        }
        let panel = panel_from_returns(returns);
        match fit_gaussian(&panel) {
            Err(Error::RankDeficient { a, b, corr }) => {
                assert_eq!((a.as_str(), b.as_str()), ("T0", "T1"));
                assert_relative_eq!(corr, 1.0, epsilon = 1e-12);
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn too_few_rows_is_rejected() {
        let panel = panel_from_returns(DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64));
        assert!(matches!(
            fit_gaussian(&panel),
            Err(Error::InsufficientData { needed: 5, got: 4 })
        ));
    }

    #[test]
    fn student_fit_with_explicit_nu_rescales_covariance() {
        let returns = DMatrix::from_fn(50, 2, |i, j| ((i + 1) as f64 * 0.37 + j as f64).sin());
        let panel = panel_from_returns(returns);
        let gauss = fit_gaussian(&panel).unwrap();
        let student = fit_student_t(&panel, Some(8.0)).unwrap();
        let expected = gauss.omega() * (6.0 / 8.0);
        assert_relative_eq!(student.omega(), &expected, epsilon = 1e-14);
        // Implied covariance reproduces the sample covariance exactly.
        assert_relative_eq!(student.covariance(), gauss.omega().clone(), epsilon = 1e-12);
    }

    #[test]
    fn student_fit_rejects_light_tails() {
        // Alternating sequence has negative excess kurtosis.
        let returns = DMatrix::from_fn(40, 2, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        let panel = panel_from_returns(returns);
        assert!(matches!(
            fit_student_t(&panel, None),
            Err(Error::KurtosisTooLow { .. })
        ));
        assert!(matches!(
            fit_student_t(&panel, Some(1.5)),
            Err(Error::InvalidNu { .. })
        ));
    }

    #[test]
    fn quantile_matches_hand_interpolation() {
        // 20 hand-picked values 1..20: q = 0.95 -> h = 19 * 0.95 = 18.05,
        // between the 19th and 20th order statistics: 19 + 0.05 * 1 = 19.05.
        let values: Vec<f64> = (1..=20).map(|v| v as f64).collect();
        assert_relative_eq!(quantile_type7(&values, 0.95).unwrap(), 19.05, epsilon = 1e-12);
        assert_relative_eq!(quantile_type7(&values, 0.5).unwrap(), 10.5, epsilon = 1e-12);
    }

    #[test]
    fn empirical_var_is_monotone_in_q() {
        let returns = DMatrix::from_fn(200, 1, |i, _| ((i as f64) * 0.77).sin() * 0.02);
        let panel = panel_from_returns(returns);
        let mut last = -1.0;
        for &q in &[0.5, 0.8, 0.9, 0.95, 0.99] {
            let v = empirical_var_vector(&panel, &[0], q).unwrap()[0];
            assert!(v >= last, "VaR must not decrease in q");
            last = v;
        }
    }

    #[test]
    fn empirical_var_of_symmetric_data_at_median_is_zero() {
        let mut vals = Vec::new();
        for i in 1..=100 {
            vals.push(i as f64 * 1e-3);
            vals.push(-(i as f64) * 1e-3);
        }
        let returns = DMatrix::from_fn(vals.len(), 1, |i, _| vals[i]);
        let panel = panel_from_returns(returns);
        let v = empirical_var_vector(&panel, &[0], 0.5).unwrap()[0];
        assert_relative_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn group_indices_partition_and_ordering() {
        let mut groups = BTreeMap::new();
        groups.insert("T0".to_string(), "tech".to_string());
        groups.insert("T1".to_string(), "banks".to_string());
        groups.insert("T2".to_string(), "tech".to_string());
        groups.insert("T3".to_string(), "banks".to_string());
        groups.insert("ZZZ".to_string(), "ghost".to_string());
        let panel = ReturnPanel::new(
            vec!["d0".into(), "d1".into(), "d2".into()],
            vec!["T0".into(), "T1".into(), "T2".into(), "T3".into()],
            DMatrix::zeros(3, 4),
            Some(groups),
        )
        .unwrap();
        let gi = group_indices(&panel).unwrap();
        let keys: Vec<&String> = gi.groups.keys().collect();
        assert_eq!(keys, ["banks", "tech"]);
        assert_eq!(gi.groups["banks"], vec![1, 3]);
        assert_eq!(gi.groups["tech"], vec![0, 2]);
        assert_eq!(gi.ignored, vec!["ZZZ".to_string()]);
    }

    #[test]
    fn group_indices_rejects_unmapped_ticker() {
        let mut groups = BTreeMap::new();
        groups.insert("T0".to_string(), "tech".to_string());
        let panel = ReturnPanel::new(
            vec!["d0".into()],
            vec!["T0".into(), "T1".into()],
            DMatrix::zeros(1, 2),
            Some(groups),
        )
        .unwrap();
        match group_indices(&panel) {
            Err(Error::UnmappedTicker { tickers }) => assert_eq!(tickers, vec!["T1".to_string()]),
            other => panic!("expected UnmappedTicker, got {other:?}"),
        }
    }
}
