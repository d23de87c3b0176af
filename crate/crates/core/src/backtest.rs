//! Rolling-window tangent-portfolio backtests and cross-model comparison.
//!
//! At each rebalance date the chosen estimator runs on the trailing window
//! of returns, the tangent weights are imposed, and the holdings drift with
//! prices until the next rebalance. Before the first full window the
//! portfolio is rebalanced to equal weights. When estimation or the solve
//! fails the previous target is re-imposed and the event is recorded.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::{FactorKind, FactorPanel, ReturnFrame, ReturnKind, DATE_FORMAT};
use crate::moments::{self, EstimatorOptions, ModelTag};
use crate::optimizer::{tangent_weights, Weights};
use crate::spt::annualized_sharpe;
use crate::stats;

pub const DEFAULT_WINDOW: usize = 250;
/// Default cap on tangent gross exposure Σ|w|.
pub const DEFAULT_MAX_LEVERAGE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskFreeSource {
    /// The factor panel's `risk_free` column when present, else zero.
    Auto,
    Column,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestConfig {
    pub model: ModelTag,
    pub estimation_window: usize,
    pub rf_source: RiskFreeSource,
    pub rebalance_every: usize,
    pub estimator: EstimatorOptions,
    /// Reject a window whose tangency lies on the inefficient branch
    /// (mean below the risk-free rate), which minimizes rather than
    /// maximizes the Sharpe ratio.
    pub efficient_only: bool,
    /// Reject tangent weights whose gross exposure Σ|w| exceeds this.
    pub max_leverage: Option<f64>,
}

impl BacktestConfig {
    pub fn new(model: ModelTag) -> Self {
        BacktestConfig {
            model,
            estimation_window: DEFAULT_WINDOW,
            rf_source: RiskFreeSource::Auto,
            rebalance_every: 1,
            estimator: EstimatorOptions::default(),
            efficient_only: true,
            max_leverage: Some(DEFAULT_MAX_LEVERAGE),
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.estimation_window = window;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestEvent {
    pub period: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub model: ModelTag,
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<String>,
    /// Weights held during each period.
    pub weights: Vec<Weights>,
    /// Periods at which the portfolio was rebalanced to a new target.
    pub rebalance_periods: Vec<usize>,
    /// Length periods + 1, starting at 1.
    pub wealth: Vec<f64>,
    pub portfolio_returns: Vec<f64>,
    /// Estimator or solver failures; the previous target was kept.
    pub events: Vec<BacktestEvent>,
    /// Target computed from the final window, for the period after the sample.
    pub terminal_weights: Option<Weights>,
}

impl BacktestResult {
    pub fn final_wealth(&self) -> f64 {
        *self.wealth.last().expect("wealth path is never empty")
    }

    /// ln(1 + r_p) per period.
    pub fn log_returns(&self) -> Vec<f64> {
        self.portfolio_returns.iter().map(|r| r.ln_1p()).collect()
    }

    /// CSV with columns `date, wealth, return, w_1..w_n` (wealth at the end
    /// of the period, the period's portfolio return and the held weights).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string(), "wealth".to_string(), "return".to_string()];
        header.extend(self.assets.iter().map(|a| format!("w_{a}")));
        w.write_record(&header)?;
        for (t, weights) in self.weights.iter().enumerate() {
            let mut rec = vec![
                self.dates[t].format(DATE_FORMAT).to_string(),
                self.wealth[t + 1].to_string(),
                self.portfolio_returns[t].to_string(),
            ];
            rec.extend(weights.as_slice().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn risk_free_rate(source: RiskFreeSource, f: &FactorPanel, start: usize, end: usize) -> Result<f64> {
    match source {
        RiskFreeSource::Constant(v) => Ok(v),
        RiskFreeSource::Column => Ok(stats::mean(&f.require(FactorKind::RiskFree)?[start..end])),
        RiskFreeSource::Auto => Ok(f
            .get(FactorKind::RiskFree)
            .map_or(0.0, |rf| stats::mean(&rf[start..end]))),
    }
}

fn window_target(
    r: &ReturnFrame,
    f: &FactorPanel,
    cfg: &BacktestConfig,
    start: usize,
    end: usize,
) -> Result<Weights> {
    let window_r = r.slice(start, end);
    let window_f = f.slice(start, end);
    let m = moments::estimate(cfg.model, &window_r, &window_f, cfg.estimator)?;
    let rf = risk_free_rate(cfg.rf_source, f, start, end)?;
    let w = tangent_weights(&m, rf)?;
    if cfg.efficient_only {
        let mu_p = w.dot(&m.mu);
        if !(mu_p > rf) {
            return Err(Error::Degenerate(format!(
                "risk-free rate {rf:.3e} is at or above the minimum-variance mean; no efficient tangency"
            )));
        }
    }
    if let Some(cap) = cfg.max_leverage {
        let gross: f64 = w.as_slice().iter().map(|v| v.abs()).sum();
        if gross > cap {
            return Err(Error::Degenerate(format!(
                "tangent gross exposure {gross:.1} exceeds the cap {cap}"
            )));
        }
    }
    Ok(w)
}

/// Runs the rolling tangent-portfolio strategy over simple returns `r` with
/// a factor panel on the same dates.
pub fn run_backtest(r: &ReturnFrame, f: &FactorPanel, cfg: &BacktestConfig) -> Result<BacktestResult> {
    if r.kind() != ReturnKind::Simple {
        return Err(Error::InvalidInput("backtests need simple returns".into()));
    }
    if f.dates() != r.dates() {
        return Err(Error::Dimension(
            "factor panel dates differ from return dates; align them first".into(),
        ));
    }
    let n = r.n_assets();
    let periods = r.len();
    if cfg.estimation_window < n + 2 {
        return Err(Error::InvalidInput(format!(
            "estimation window {} is shorter than n + 2 = {}",
            cfg.estimation_window,
            n + 2
        )));
    }
    if cfg.rebalance_every == 0 {
        return Err(Error::InvalidInput("rebalance interval must be at least 1".into()));
    }
    if periods <= cfg.estimation_window {
        return Err(Error::InvalidInput(format!(
            "{periods} periods do not cover an estimation window of {}",
            cfg.estimation_window
        )));
    }
    if cfg.rf_source == RiskFreeSource::Column {
        f.require(FactorKind::RiskFree)?;
    }

    let mut target = Weights::uniform(n);
    let mut held = target.clone();
    let mut weights = Vec::with_capacity(periods);
    let mut rebalance_periods = Vec::new();
    let mut wealth = Vec::with_capacity(periods + 1);
    let mut portfolio_returns = Vec::with_capacity(periods);
    let mut events = Vec::new();
    wealth.push(1.0);

    for t in 0..periods {
        if t % cfg.rebalance_every == 0 {
            if t >= cfg.estimation_window {
                match window_target(r, f, cfg, t - cfg.estimation_window, t) {
                    Ok(w) => target = w,
                    Err(e) => {
                        log::debug!("{} backtest period {t}: {e}; keeping previous weights", cfg.model);
                        events.push(BacktestEvent {
                            period: t,
                            message: e.to_string(),
                        });
                    }
                }
            }
            held = target.clone();
            rebalance_periods.push(t);
        }
        let row = r.returns().row(t);
        let ret: f64 = held.as_slice().iter().zip(row.iter()).map(|(w, x)| w * x).sum();
        let gross = 1.0 + ret;
        if !(gross > 0.0) {
            return Err(Error::Ruin { period: t, gross });
        }
        weights.push(held.clone());
        portfolio_returns.push(ret);
        wealth.push(wealth[t] * gross);
        let drifted: Vec<f64> = held
            .as_slice()
            .iter()
            .zip(row.iter())
            .map(|(w, x)| w * (1.0 + x) / gross)
            .collect();
        held = Weights::from_unchecked(drifted);
    }

    let terminal_weights = window_target(r, f, cfg, periods - cfg.estimation_window, periods).ok();

    Ok(BacktestResult {
        model: cfg.model,
        dates: r.dates().to_vec(),
        assets: r.assets().to_vec(),
        weights,
        rebalance_periods,
        wealth,
        portfolio_returns,
        events,
        terminal_weights,
    })
}

/// Largest peak-to-trough loss as a fraction of the running peak.
pub fn max_drawdown(wealth: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &w in wealth {
        peak = peak.max(w);
        if peak > 0.0 {
            worst = worst.max((peak - w) / peak);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub model_tag: ModelTag,
    pub final_wealth: Option<f64>,
    pub annualized_sharpe: Option<f64>,
    pub max_drawdown: Option<f64>,
    pub error: Option<String>,
}

impl ComparisonRow {
    pub fn from_result(res: &BacktestResult) -> Self {
        ComparisonRow {
            model_tag: res.model,
            final_wealth: Some(res.final_wealth()),
            annualized_sharpe: annualized_sharpe(&res.portfolio_returns),
            max_drawdown: Some(max_drawdown(&res.wealth)),
            error: None,
        }
    }
}

/// One row per configuration; a failing run is reported inline.
pub fn compare_models(r: &ReturnFrame, f: &FactorPanel, cfgs: &[BacktestConfig]) -> Vec<ComparisonRow> {
    cfgs.par_iter()
        .map(|cfg| match run_backtest(r, f, cfg) {
            Ok(res) => ComparisonRow::from_result(&res),
            Err(e) => ComparisonRow {
                model_tag: cfg.model,
                final_wealth: None,
                annualized_sharpe: None,
                max_drawdown: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

pub fn write_comparison_csv<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    use crate::market_data::fmt_opt;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model_tag", "final_wealth", "annualized_sharpe", "max_drawdown", "error"])?;
    for row in rows {
        w.write_record([
            row.model_tag.to_string(),
            fmt_opt(row.final_wealth),
            fmt_opt(row.annualized_sharpe),
            fmt_opt(row.max_drawdown),
            row.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_market(periods: usize, n: usize) -> (ReturnFrame, FactorPanel) {
        let r = ReturnFrame::from_rows(&vec![vec![0.0; n]; periods]).unwrap();
        let f = FactorPanel::empty(r.dates().to_vec()).unwrap();
        (r, f)
    }

    #[test]
    fn zero_returns_keep_wealth_at_one() {
        let (r, f) = flat_market(30, 3);
        for model in [ModelTag::MM, ModelTag::CCM] {
            let res = run_backtest(&r, &f, &BacktestConfig::new(model).with_window(10)).unwrap();
            assert!(res.wealth.iter().all(|w| *w == 1.0));
            assert!(!res.events.is_empty());
        }
    }

    #[test]
    fn single_asset_is_buy_and_hold() {
        let rows: Vec<Vec<f64>> = (0..40).map(|t| vec![0.01 * ((t as f64) * 0.7).sin()]).collect();
        let r = ReturnFrame::from_rows(&rows).unwrap();
        let f = FactorPanel::empty(r.dates().to_vec()).unwrap();
        let res = run_backtest(&r, &f, &BacktestConfig::new(ModelTag::MM).with_window(5)).unwrap();
        let hold: f64 = rows.iter().map(|x| 1.0 + x[0]).product();
        assert_relative_eq!(res.final_wealth(), hold, max_relative = 1e-12);
    }

    #[test]
    fn config_validation() {
        let (r, f) = flat_market(30, 3);
        assert!(run_backtest(&r, &f, &BacktestConfig::new(ModelTag::MM).with_window(4)).is_err());
        assert!(run_backtest(&r, &f, &BacktestConfig::new(ModelTag::MM).with_window(30)).is_err());
        let mut cfg = BacktestConfig::new(ModelTag::MM).with_window(10);
        cfg.rebalance_every = 0;
        assert!(run_backtest(&r, &f, &cfg).is_err());
        cfg.rebalance_every = 1;
        cfg.rf_source = RiskFreeSource::Column;
        assert!(run_backtest(&r, &f, &cfg).is_err());
    }

    #[test]
    fn drawdown_cases() {
        assert_eq!(max_drawdown(&[1.0, 1.1, 1.2, 1.5]), 0.0);
        assert_relative_eq!(max_drawdown(&[1.0, 2.0, 1.0, 1.5, 0.5]), 0.75);
    }

    #[test]
    fn identical_configs_identical_rows() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|t| {
                let x = t as f64;
                vec![0.01 * (x * 0.9).sin(), 0.012 * (x * 1.3).cos(), 0.008 * (x * 0.4).sin() + 0.001]
            })
            .collect();
        let r = ReturnFrame::from_rows(&rows).unwrap();
        let f = FactorPanel::empty(r.dates().to_vec()).unwrap();
        let cfg = BacktestConfig::new(ModelTag::MM).with_window(20);
        let table = compare_models(&r, &f, &[cfg, cfg]);
        assert_eq!(table[0], table[1]);
        let res = run_backtest(&r, &f, &cfg).unwrap();
        assert_eq!(table[0].final_wealth, Some(res.final_wealth()));
    }
}
