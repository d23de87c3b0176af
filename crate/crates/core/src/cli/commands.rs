//! One function per subcommand. Each loads its inputs, runs the library,
//! and writes CSV/JSON artifacts plus a manifest into the output directory.

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use portfolio_analytics::backtest::{self, BacktestConfig, BacktestResult, ComparisonRow};
use portfolio_analytics::forecasting::{self, ArmaGarchFit, FactorModelFit, ForecastMetrics};
use portfolio_analytics::market_data::{
    self, FactorPanel, PriceFrame, ReturnFrame, ReturnKind,
};
use portfolio_analytics::moments::{self, EstimatorOptions, ModelTag};
use portfolio_analytics::optimizer::{self, Weights};
use portfolio_analytics::risk::{self, RiskMethod, RiskReport};
use portfolio_analytics::spt::{self, Objective};
use portfolio_analytics::universal::{self, WacrpWeighting, WeightSchedule};
use portfolio_analytics::{stats, synthetic};

use super::config::RunConfig;
use super::manifest::{input_record, FileRecord, Outputs};

struct Data {
    prices: PriceFrame,
    /// Simple returns restricted to dates shared with the factor panel.
    returns: ReturnFrame,
    factors: FactorPanel,
    inputs: Vec<FileRecord>,
}

fn load(cfg: &RunConfig) -> Result<Data> {
    let (prices, factors, inputs) = match &cfg.prices {
        Some(path) => {
            let prices = market_data::load_prices(path, &cfg.date_column)
                .with_context(|| format!("loading prices from {}", path.display()))?;
            let mut inputs = vec![input_record(path)?];
            let factors = match &cfg.factors {
                Some(fp) => {
                    inputs.push(input_record(fp)?);
                    Some(
                        market_data::load_factors(fp, &cfg.date_column)
                            .with_context(|| format!("loading factors from {}", fp.display()))?,
                    )
                }
                None => None,
            };
            (prices, factors, inputs)
        }
        None => {
            let (p, f) = synthetic::bundled_fixture()?;
            let inputs = vec![FileRecord {
                path: format!("bundled-fixture(seed={})", synthetic::FIXTURE_SEED),
                sha256: String::new(),
            }];
            (p, Some(f), inputs)
        }
    };
    if prices.dropped_rows() > 0 {
        warn!("dropped {} price rows with missing cells", prices.dropped_rows());
    }
    let simple = market_data::compute_returns(&prices, ReturnKind::Simple);
    let (returns, factors) = match factors {
        Some(f) => market_data::align(&simple, &f)?,
        None => {
            let empty = FactorPanel::empty(simple.dates().to_vec())?;
            (simple, empty)
        }
    };
    Ok(Data {
        prices,
        returns,
        factors,
        inputs,
    })
}

fn risk_free_mean(f: &FactorPanel) -> f64 {
    f.get(market_data::FactorKind::RiskFree).map_or(0.0, stats::mean)
}

fn backtest_configs(cfg: &RunConfig) -> Vec<BacktestConfig> {
    cfg.models
        .iter()
        .map(|m| BacktestConfig::new(*m).with_window(cfg.window))
        .collect()
}

fn run_backtests(cfg: &RunConfig, d: &Data) -> Vec<(ModelTag, portfolio_analytics::Result<BacktestResult>)> {
    backtest_configs(cfg)
        .par_iter()
        .map(|c| (c.model, backtest::run_backtest(&d.returns, &d.factors, c)))
        .collect()
}

pub fn ingest(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    let d = load(cfg)?;
    let mut out = Outputs::new(&cfg.out);
    out.write_csv("prices.csv", |w| d.prices.write_csv(w))?;
    out.write_csv("returns.csv", |w| d.returns.write_csv(w))?;
    let log_returns = market_data::compute_returns(&d.prices, ReturnKind::Log);
    out.write_csv("log_returns.csv", |w| log_returns.write_csv(w))?;
    if !d.factors.columns().is_empty() {
        out.write_csv("factors.csv", |w| d.factors.write_csv(w))?;
    }
    let summary = market_data::summary_stats(&d.returns)?;
    out.write_csv("summary.csv", |w| summary.write_csv(w))?;
    out.write_json("summary.json", &summary)?;
    out.finish("ingest", cfg, &d.inputs)
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    let (prices, factors) = synthetic::fixture(cfg.seed, cfg.steps)?;
    let mut out = Outputs::new(&cfg.out);
    out.write_csv("prices.csv", |w| prices.write_csv(w))?;
    out.write_csv("factors.csv", |w| factors.write_csv(w))?;
    out.finish("simulate", cfg, &[])
}

pub fn estimate(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    let d = load(cfg)?;
    let rows: Vec<serde_json::Value> = cfg
        .models
        .iter()
        .map(|m| match moments::estimate(*m, &d.returns, &d.factors, EstimatorOptions::default()) {
            Ok(est) => serde_json::to_value(&est).expect("moment estimates serialize"),
            Err(e) => json!({ "model_tag": m, "error": e.to_string() }),
        })
        .collect();
    let mut out = Outputs::new(&cfg.out);
    out.write_json("moments.json", &rows)?;
    out.finish("estimate", cfg, &d.inputs)
}

#[derive(Serialize)]
struct NamedPortfolio {
    weights: Weights,
    mu_p: f64,
    sigma_p: f64,
    sharpe: Option<f64>,
}

fn named(w: Weights, m: &moments::MomentEstimate, rf: f64) -> Result<NamedPortfolio> {
    let s = optimizer::portfolio_stats(&w, m, rf)?;
    Ok(NamedPortfolio {
        weights: w,
        mu_p: s.mu_p,
        sigma_p: s.sigma_p,
        sharpe: s.sharpe,
    })
}

pub fn frontier(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    const POINTS: usize = 51;
    let d = load(cfg)?;
    let rf = risk_free_mean(&d.factors);
    let mut out = Outputs::new(&cfg.out);
    let mut summary = Vec::new();
    for m in &cfg.models {
        let result = (|| -> Result<serde_json::Value> {
            let est = moments::estimate(*m, &d.returns, &d.factors, EstimatorOptions::default())?;
            let coef = optimizer::frontier_coefficients(&est)?;
            let centre = coef.min_variance_mean();
            let top = est.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if top > centre { top - centre } else { coef.variance_at(centre).sqrt() };
            let targets: Vec<f64> = (0..POINTS)
                .map(|k| centre - span + 2.0 * span * k as f64 / (POINTS - 1) as f64)
                .collect();
            let points = optimizer::efficient_frontier(&est, &targets)?;
            out.write_csv(&format!("frontier_{m}.csv"), |w| {
                optimizer::write_frontier_csv(w, &points, d.returns.assets())
            })?;
            let mv = named(optimizer::min_variance_weights(&est)?, &est, rf)?;
            let tangent = match optimizer::tangent_weights(&est, rf) {
                Ok(w) => serde_json::to_value(named(w, &est, rf)?)?,
                Err(e) => json!({ "error": e.to_string() }),
            };
            Ok(json!({ "model_tag": m, "risk_free": rf, "min_variance": mv, "tangent": tangent }))
        })();
        summary.push(result.unwrap_or_else(|e| json!({ "model_tag": m, "error": format!("{e:#}") })));
    }
    out.write_json("portfolios.json", &summary)?;
    out.finish("frontier", cfg, &d.inputs)
}

pub fn backtest(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    let d = load(cfg)?;
    let results = run_backtests(cfg, &d);
    let mut out = Outputs::new(&cfg.out);
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for (model, res) in &results {
        match res {
            Ok(r) => {
                out.write_csv(&format!("backtest_{model}.csv"), |w| r.write_csv(w))?;
                rows.push(ComparisonRow::from_result(r));
                details.push(json!({
                    "model_tag": model,
                    "rebalances": r.rebalance_periods.len(),
                    "events": r.events,
                    "terminal_weights": r.terminal_weights,
                }));
            }
            Err(e) => {
                warn!("{model} backtest failed: {e}");
                rows.push(ComparisonRow {
                    model_tag: *model,
                    final_wealth: None,
                    annualized_sharpe: None,
                    max_drawdown: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    out.write_csv("comparison.csv", |w| backtest::write_comparison_csv(w, &rows))?;
    out.write_json("comparison.json", &rows)?;
    out.write_json("backtest_details.json", &details)?;
    out.finish("backtest", cfg, &d.inputs)
}

pub fn universal(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    let d = load(cfg)?;
    let r = market_data::compute_returns(&d.prices, ReturnKind::Simple);
    let n = r.n_assets();
    let best = universal::best_crp(&r)?;
    let strategies: Vec<(&str, WeightSchedule)> = vec![
        ("ucrp", universal::crp_schedule(&Weights::uniform(n), r.len())),
        ("best_crp", universal::crp_schedule(&best, r.len())),
        ("cover", universal::cover_schedule(&r, cfg.cover_samples, cfg.seed)?),
        ("scrp", universal::scrp_schedule(&r)?),
        ("wacrp", universal::wacrp_schedule(&r, WacrpWeighting::default())?),
    ];
    let mut out = Outputs::new(&cfg.out);
    let mut summary = Vec::new();
    for (name, schedule) in &strategies {
        let wealth = universal::wealth_of_schedule(schedule, &r)?;
        out.write_csv(&format!("universal_{name}.csv"), |w| {
            universal::write_schedule_csv(w, r.dates(), r.assets(), schedule, &wealth)
        })?;
        summary.push((name.to_string(), wealth.final_wealth()));
    }
    let p = d.prices.prices();
    for (j, asset) in d.prices.assets().iter().enumerate() {
        summary.push((format!("hold_{asset}"), p[(p.nrows() - 1, j)] / p[(0, j)]));
    }
    let mut table = String::from("strategy,final_wealth\n");
    for (name, fw) in &summary {
        table.push_str(&format!("{name},{fw}\n"));
    }
    out.write("universal_summary.csv", table.as_bytes())?;
    out.write_json(
        "best_crp.json",
        &json!({ "assets": r.assets(), "weights": best, "cover_samples": cfg.cover_samples, "seed": cfg.seed }),
    )?;
    out.finish("universal", cfg, &d.inputs)
}

pub fn risk(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    let d = load(cfg)?;
    let results = run_backtests(cfg, &d);
    let mut reports = Vec::new();
    for (model, res) in results {
        let res = res.with_context(|| format!("{model} backtest"))?;
        let series = &res.portfolio_returns[cfg.window..];
        let name = model.to_string();
        match risk::estimate(series, cfg.position, cfg.alpha, RiskMethod::ParametricT) {
            Ok(e) => reports.push(RiskReport::from_estimate(&name, &e)),
            Err(e) => warn!("{model} parametric t: {e}"),
        }
        for method in [RiskMethod::Historical, RiskMethod::Gaussian, RiskMethod::CornishFisher] {
            let ci = risk::bootstrap_ci(series, cfg.position, cfg.alpha, method, cfg.bootstrap_b, cfg.seed)
                .with_context(|| format!("{model} {method} bootstrap"))?;
            reports.push(RiskReport::from_bootstrap(&name, &ci));
        }
    }
    let mut out = Outputs::new(&cfg.out);
    out.write_csv("risk.csv", |w| risk::write_report_csv(w, &reports))?;
    out.write_json("risk.json", &reports)?;
    out.finish("risk", cfg, &d.inputs)
}

pub fn fgp(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    let d = load(cfg)?;
    let r = market_data::compute_returns(&d.prices, ReturnKind::Simple);
    let mw = spt::market_weights_from_prices(&d.prices, None)?;
    let by_sharpe = spt::optimize_p(&mw, &r, Objective::Sharpe, cfg.grid_step)?;
    let by_excess = spt::optimize_p(&mw, &r, Objective::ExcessReturn, cfg.grid_step)?;
    let best_schedule = spt::dwp_schedule(&mw, r.len(), by_sharpe.best_p)?;
    let wealth = universal::wealth_of_schedule(&best_schedule, &r)?;
    let mut out = Outputs::new(&cfg.out);
    out.write_csv("fgp_grid.csv", |w| spt::write_grid_csv(w, &by_sharpe))?;
    out.write_csv("fgp_best.csv", |w| {
        universal::write_schedule_csv(w, r.dates(), r.assets(), &best_schedule, &wealth)
    })?;
    out.write_json(
        "fgp.json",
        &json!({
            "grid_step": cfg.grid_step,
            "best_p_sharpe": by_sharpe.best_p,
            "best_sharpe": by_sharpe.best_value,
            "best_p_excess_return": by_excess.best_p,
            "best_excess_return": by_excess.best_value,
        }),
    )?;
    out.finish("fgp", cfg, &d.inputs)
}

#[derive(Serialize)]
struct ForecastSummary {
    model_tag: ModelTag,
    train_periods: usize,
    test_periods: usize,
    factor_model: FactorModelFit,
    residual_model: ArmaGarchFit,
    train_metrics: ForecastMetrics,
    test_metrics: ForecastMetrics,
}

fn forecast_model(
    cfg: &RunConfig,
    d: &Data,
    model: ModelTag,
    res: &BacktestResult,
) -> Result<(ForecastSummary, Vec<u8>)> {
    let y: Vec<f64> = res.log_returns()[cfg.window..].to_vec();
    let dates = &res.dates[cfg.window..];
    let f = d.factors.slice(cfg.window, d.factors.len());
    let split = match cfg.train_end {
        Some(end) => dates.partition_point(|t| *t <= end),
        None => forecasting::default_split(y.len()),
    };
    if split < 10 || split >= y.len() {
        bail!("train/test split at {split} of {} periods leaves an empty sample", y.len());
    }
    let train_f = f.slice(0, split);
    let test_f = f.slice(split, y.len());
    let candidates = f.columns().to_vec();
    let factor_fit = forecasting::fit_factor_regression(&y[..split], &train_f, &candidates, cfg.selection())?;
    let garch = forecasting::fit_arma_garch(&factor_fit.residuals, cfg.arma_p, cfg.arma_q)?;

    let train_factor = factor_fit.predict_panel(&train_f)?;
    let mut fitted: Vec<f64> = (0..split)
        .map(|t| train_factor[t] + factor_fit.residuals[t] - garch.innovations[t])
        .collect();
    let mut variance = garch.conditional_variance.clone();
    let test_factor = factor_fit.predict_panel(&test_f)?;
    let test_resid: Vec<f64> = (split..y.len()).map(|t| y[t] - test_factor[t - split]).collect();
    for (k, (mean, var)) in garch.extend(&test_resid).into_iter().enumerate() {
        fitted.push(test_factor[k] + mean);
        variance.push(var);
    }
    let train_metrics = forecasting::evaluate_forecasts(&y[..split], &fitted[..split])?;
    let test_metrics = forecasting::evaluate_forecasts(&y[split..], &fitted[split..])?;
    let mut buf = Vec::new();
    forecasting::write_forecast_csv(&mut buf, dates, &y, &fitted, &variance, split)?;
    Ok((
        ForecastSummary {
            model_tag: model,
            train_periods: split,
            test_periods: y.len() - split,
            factor_model: factor_fit,
            residual_model: garch,
            train_metrics,
            test_metrics,
        },
        buf,
    ))
}

pub fn forecast(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    let d = load(cfg)?;
    let results = run_backtests(cfg, &d);
    let fits: Vec<Result<(ForecastSummary, Vec<u8>)>> = results
        .par_iter()
        .map(|(model, res)| {
            let res = res.as_ref().map_err(|e| anyhow!("{model} backtest: {e}"))?;
            forecast_model(cfg, &d, *model, res).with_context(|| format!("{model} forecast"))
        })
        .collect();
    let mut out = Outputs::new(&cfg.out);
    let mut summaries = Vec::new();
    for fit in fits {
        let (summary, csv) = fit?;
        out.write(&format!("forecast_{}.csv", summary.model_tag), &csv)?;
        summaries.push(summary);
    }
    out.write_json("forecast.json", &summaries)?;
    out.finish("forecast", cfg, &d.inputs)
}

/// Rebuilds the comparison table from the `backtest_<MODEL>.csv` files in
/// the output directory.
pub fn report(cfg: &RunConfig) -> Result<Vec<FileRecord>> {
    let mut rows = Vec::new();
    let mut inputs = Vec::new();
    let mut missing = Vec::new();
    for model in &cfg.models {
        let path = cfg.out.join(format!("backtest_{model}.csv"));
        if !path.is_file() {
            missing.push(path.display().to_string());
            continue;
        }
        inputs.push(input_record(&path)?);
        let mut reader = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
        let headers = reader.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| anyhow!("{} has no {name} column", path.display()))
        };
        let (wealth_col, return_col) = (column("wealth")?, column("return")?);
        let mut wealth = vec![1.0];
        let mut returns = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            wealth.push(rec[wealth_col].parse::<f64>().with_context(|| format!("{}: bad wealth", path.display()))?);
            returns.push(rec[return_col].parse::<f64>().with_context(|| format!("{}: bad return", path.display()))?);
        }
        rows.push(ComparisonRow {
            model_tag: *model,
            final_wealth: wealth.last().copied(),
            annualized_sharpe: spt::annualized_sharpe(&returns),
            max_drawdown: Some(backtest::max_drawdown(&wealth)),
            error: None,
        });
    }
    if !missing.is_empty() {
        bail!("run `backtest` first; missing {}", missing.join(", "));
    }
    info!("report over {} models", rows.len());
    let mut out = Outputs::new(&cfg.out);
    out.write_csv("report.csv", |w| backtest::write_comparison_csv(w, &rows))?;
    out.write_json("report.json", &rows)?;
    out.finish("report", cfg, &inputs)
}
