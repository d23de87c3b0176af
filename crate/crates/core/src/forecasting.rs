//! Factor regression with backward selection, residual diagnostics, and
//! ARMA(p, q) + GARCH(1, 1) residual models for one-step forecasts.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, OlsFit};
use crate::market_data::{FactorKind, FactorPanel};
use crate::optim::{self, BfgsOptions, StopReason};
use crate::stats;

pub const DEFAULT_SELECTION_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Drop the factor with the largest p-value while any exceeds the level.
    PValue(f64),
    /// Drop the factor whose removal lowers AIC most, while any does.
    Aic,
}

impl Default for Selection {
    fn default() -> Self {
        Selection::PValue(DEFAULT_SELECTION_ALPHA)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorModelFit {
    pub intercept: f64,
    pub factors: Vec<FactorKind>,
    pub coefficients: Vec<f64>,
    /// Intercept first, then one per retained factor.
    pub p_values: Vec<f64>,
    /// Factors removed during selection, in removal order.
    pub dropped: Vec<FactorKind>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub log_likelihood: f64,
    pub aic: f64,
}

impl FactorModelFit {
    fn from_ols(factors: Vec<FactorKind>, dropped: Vec<FactorKind>, fit: OlsFit) -> Self {
        let log_likelihood = fit.log_likelihood();
        let k = factors.len() as f64 + 1.0;
        FactorModelFit {
            intercept: fit.intercept,
            coefficients: fit.slopes,
            p_values: fit.p_values,
            factors,
            dropped,
            residuals: fit.residuals,
            r_squared: fit.r_squared,
            adjusted_r_squared: fit.adj_r_squared,
            log_likelihood,
            aic: 2.0 * k - 2.0 * log_likelihood,
        }
    }

    /// Prediction from `(factor, value)` pairs, which must cover every
    /// retained factor.
    pub fn predict(&self, values: &[(FactorKind, f64)]) -> Result<f64> {
        let mut y = self.intercept;
        for (kind, b) in self.factors.iter().zip(&self.coefficients) {
            let v = values
                .iter()
                .find(|(k, _)| k == kind)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::InvalidInput(format!("missing value for factor {kind}")))?;
            y += b * v;
        }
        Ok(y)
    }

    /// Predictions for every row of a panel holding the retained factors.
    pub fn predict_panel(&self, f: &FactorPanel) -> Result<Vec<f64>> {
        let cols = self
            .factors
            .iter()
            .map(|k| f.require(*k))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..f.len())
            .map(|t| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .zip(&cols)
                        .map(|(b, c)| b * c[t])
                        .sum::<f64>()
            })
            .collect())
    }
}

fn ols_on(y: &[f64], f: &FactorPanel, factors: &[FactorKind]) -> Result<OlsFit> {
    let cols = factors.iter().map(|k| f.require(*k)).collect::<Result<Vec<_>>>()?;
    let names: Vec<&str> = factors.iter().map(|k| k.as_str()).collect();
    linalg::ols(y, &cols, &names)
}

/// OLS of `y` on an intercept and the candidate factors, followed by
/// backward elimination.
pub fn fit_factor_regression(
    y: &[f64],
    f: &FactorPanel,
    candidates: &[FactorKind],
    selection: Selection,
) -> Result<FactorModelFit> {
    if y.len() != f.len() {
        return Err(Error::Dimension(format!(
            "series has {} rows, factor panel has {}",
            y.len(),
            f.len()
        )));
    }
    if y.len() <= candidates.len() + 2 {
        return Err(Error::InvalidInput(format!(
            "{} observations are too few for {} candidate factors",
            y.len(),
            candidates.len()
        )));
    }
    for (i, c) in candidates.iter().enumerate() {
        if candidates[..i].contains(c) {
            return Err(Error::InvalidInput(format!("factor {c} listed twice")));
        }
    }
    if let Selection::PValue(level) = selection {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidInput(format!("selection level {level} outside (0, 1)")));
        }
    }

    let mut current: Vec<FactorKind> = candidates.to_vec();
    let mut dropped = Vec::new();
    let mut fit = ols_on(y, f, &current)?;
    loop {
        if current.is_empty() {
            break;
        }
        let remove = match selection {
            Selection::PValue(level) => {
                let (j, p) = fit.p_values[1..]
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, p)| if *p > best.1 { (j, *p) } else { best });
                (p > level).then_some((j, None))
            }
            Selection::Aic => {
                let base = 2.0 * (current.len() as f64 + 1.0) - 2.0 * fit.log_likelihood();
                let mut best: Option<(usize, f64, OlsFit)> = None;
                for j in 0..current.len() {
                    let mut trial = current.clone();
                    trial.remove(j);
                    let cand = ols_on(y, f, &trial)?;
                    let aic = 2.0 * (trial.len() as f64 + 1.0) - 2.0 * cand.log_likelihood();
                    if aic < base && best.as_ref().is_none_or(|b| aic < b.1) {
                        best = Some((j, aic, cand));
                    }
                }
                best.map(|(j, _, cand)| (j, Some(cand)))
            }
        };
        let Some((j, refit)) = remove else { break };
        dropped.push(current.remove(j));
        fit = match refit {
            Some(cand) => cand,
            None => ols_on(y, f, &current)?,
        };
    }
    Ok(FactorModelFit::from_ols(current, dropped, fit))
}

/// Sample autocorrelations at lags 0..=max_lag.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag + 1 {
        return Err(Error::InvalidInput(format!(
            "{n} observations are too few for {max_lag} lags"
        )));
    }
    let m = stats::mean(series);
    let d: Vec<f64> = series.iter().map(|x| x - m).collect();
    let c0: f64 = d.iter().map(|x| x * x).sum();
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / c0
            }
        })
        .collect())
}

/// Partial autocorrelations at lags 0..=max_lag via Durbin-Levinson; lag 0
/// is 1 by convention.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(series, max_lag)?;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = rho[k] - phi.iter().enumerate().map(|(j, p)| p * rho[k - 1 - j]).sum::<f64>();
        let den = 1.0 - phi.iter().enumerate().map(|(j, p)| p * rho[j + 1]).sum::<f64>();
        let a = num / den;
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - a * prev[k - 2 - j];
        }
        phi.push(a);
        out.push(a);
    }
    Ok(out)
}

/// Maps partial autocorrelations in (−1, 1) to the coefficients of a
/// stationary AR polynomial.
fn pacf_to_ar(pacs: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(pacs.len());
    for (k, &r) in pacs.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - r * prev[k - 1 - j];
        }
        phi.push(r);
    }
    phi
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq)]
struct Params {
    ar: Vec<f64>,
    ma: Vec<f64>,
    omega: f64,
    alpha: f64,
    beta: f64,
}

fn unpack(theta: &[f64], p: usize, q: usize) -> Params {
    let ar = pacf_to_ar(&theta[..p].iter().map(|x| x.tanh()).collect::<Vec<_>>());
    let ma: Vec<f64> = pacf_to_ar(&theta[p..p + q].iter().map(|x| x.tanh()).collect::<Vec<_>>())
        .into_iter()
        .map(|a| -a)
        .collect();
    let persistence = logistic(theta[p + q + 1]);
    let share = logistic(theta[p + q + 2]);
    Params {
        ar,
        ma,
        omega: theta[p + q].exp(),
        alpha: persistence * share,
        beta: persistence * (1.0 - share),
    }
}

/// Runs the ARMA-GARCH filter. Pre-sample values and innovations are zero;
/// the first conditional variance is `sigma2_init`. Returns innovations,
/// conditional variances, and the Gaussian log-likelihood.
fn filter(params: &Params, y: &[f64], sigma2_init: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let n = y.len();
    let mut eps = vec![0.0; n];
    let mut sig2 = vec![0.0; n];
    let mut ll = 0.0;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    for t in 0..n {
        let mut mean = 0.0;
        for (i, phi) in params.ar.iter().enumerate() {
            if t > i {
                mean += phi * y[t - 1 - i];
            }
        }
        for (j, theta) in params.ma.iter().enumerate() {
            if t > j {
                mean += theta * eps[t - 1 - j];
            }
        }
        eps[t] = y[t] - mean;
        sig2[t] = if t == 0 {
            sigma2_init
        } else {
            params.omega + params.alpha * eps[t - 1] * eps[t - 1] + params.beta * sig2[t - 1]
        };
        ll += -0.5 * (ln2pi + sig2[t].ln() + eps[t] * eps[t] / sig2[t]);
    }
    (eps, sig2, ll)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmaGarchFit {
    pub p: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Variance used to start the filter.
    pub sigma2_init: f64,
    #[serde(skip)]
    pub series: Vec<f64>,
    #[serde(skip)]
    pub innovations: Vec<f64>,
    #[serde(skip)]
    pub conditional_variance: Vec<f64>,
    #[serde(skip)]
    pub standardized_residuals: Vec<f64>,
}

impl ArmaGarchFit {
    fn params(&self) -> Params {
        Params {
            ar: self.ar.clone(),
            ma: self.ma.clone(),
            omega: self.omega,
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    /// Unconditional variance ω / (1 − α − β).
    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }

    /// Filters `continuation` with the fitted parameters after the fitted
    /// sample. Returns, per new observation, the one-step mean forecast and
    /// conditional variance made before it was seen.
    pub fn extend(&self, continuation: &[f64]) -> Vec<(f64, f64)> {
        let mut all = self.series.clone();
        all.extend_from_slice(continuation);
        let (eps, sig2, _) = filter(&self.params(), &all, self.sigma2_init);
        let start = self.series.len();
        (start..all.len())
            .map(|t| (all[t] - eps[t], sig2[t]))
            .collect()
    }
}

/// Gaussian quasi-maximum-likelihood fit of ARMA(p, q) with GARCH(1, 1)
/// innovations and no constant. AR and MA polynomials are parameterized
/// through partial autocorrelations, so the optimum is always stationary
/// and invertible; α + β < 1 by construction.
pub fn fit_arma_garch(series: &[f64], p: usize, q: usize) -> Result<ArmaGarchFit> {
    let n = series.len();
    let need = 50 * p.max(q).max(1);
    if n < need {
        return Err(Error::InvalidInput(format!(
            "ARMA({p},{q})-GARCH needs at least {need} observations, got {n}"
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let var = stats::variance(series);
    if !(var > 0.0) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    let sd = var.sqrt();
    let x: Vec<f64> = series.iter().map(|v| v / sd).collect();
    let nf = n as f64;

    let objective = |theta: &[f64]| -> f64 {
        let (_, _, ll) = filter(&unpack(theta, p, q), &x, 1.0);
        if ll.is_finite() { -ll / nf } else { f64::INFINITY }
    };
    let mut theta0 = vec![0.0; p + q + 3];
    theta0[p + q] = 0.05f64.ln();
    theta0[p + q + 1] = logit(0.95);
    theta0[p + q + 2] = logit(0.05 / 0.95);

    let opts = BfgsOptions {
        max_iterations: 2000,
        gradient_tolerance: 1e-8,
        // A total log-likelihood gain below 1e-8.
        improvement_tolerance: 1e-8 / nf,
    };
    let min = optim::minimize(objective, |th| optim::numerical_gradient(&objective, th), &theta0, opts);
    if min.reason == StopReason::MaxIterations || !min.value.is_finite() {
        return Err(Error::NoConvergence {
            iterations: min.iterations,
            best: -min.value * nf,
        });
    }

    let scaled = unpack(&min.x, p, q);
    let params = Params {
        omega: scaled.omega * var,
        ..scaled
    };
    if !(params.omega > 0.0) || params.alpha < 0.0 || params.beta < 0.0 || params.alpha + params.beta >= 1.0 {
        return Err(Error::Degenerate(format!(
            "GARCH optimum violates constraints: omega={}, alpha={}, beta={}",
            params.omega, params.alpha, params.beta
        )));
    }
    let (eps, sig2, ll) = filter(&params, series, var);
    if sig2.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Degenerate("conditional variance left (0, ∞)".into()));
    }
    let standardized = eps.iter().zip(&sig2).map(|(e, s)| e / s.sqrt()).collect();
    Ok(ArmaGarchFit {
        p,
        q,
        ar: params.ar,
        ma: params.ma,
        omega: params.omega,
        alpha: params.alpha,
        beta: params.beta,
        log_likelihood: ll,
        iterations: min.iterations,
        sigma2_init: var,
        series: series.to_vec(),
        innovations: eps,
        conditional_variance: sig2,
        standardized_residuals: standardized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Forecast {
    pub mean: f64,
    pub variance: f64,
    pub factor_mean: f64,
    pub residual_mean: f64,
}

/// Next-period return forecast: factor prediction plus the ARMA residual
/// forecast, with the GARCH variance one step ahead.
pub fn one_step_forecast(
    fit: &ArmaGarchFit,
    factor_fit: &FactorModelFit,
    next_factors: &[(FactorKind, f64)],
) -> Result<Forecast> {
    let factor_mean = factor_fit.predict(next_factors)?;
    let n = fit.series.len();
    let mut residual_mean = 0.0;
    for (i, phi) in fit.ar.iter().enumerate() {
        if n > i {
            residual_mean += phi * fit.series[n - 1 - i];
        }
    }
    for (j, theta) in fit.ma.iter().enumerate() {
        if n > j {
            residual_mean += theta * fit.innovations[n - 1 - j];
        }
    }
    let last_eps = fit.innovations[n - 1];
    let last_var = fit.conditional_variance[n - 1];
    Ok(Forecast {
        mean: factor_mean + residual_mean,
        variance: fit.omega + fit.alpha * last_eps * last_eps + fit.beta * last_var,
        factor_mean,
        residual_mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForecastMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// Share of periods where forecast and outcome have the same sign
    /// (zero counts as its own sign).
    pub hit_rate: f64,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn evaluate_forecasts(actual: &[f64], predicted: &[f64]) -> Result<ForecastMetrics> {
    if actual.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} actual values vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidInput("no forecasts to evaluate".into()));
    }
    let n = actual.len() as f64;
    let (mut se, mut ae, mut hits) = (0.0, 0.0, 0usize);
    for (a, p) in actual.iter().zip(predicted) {
        let e = a - p;
        se += e * e;
        ae += e.abs();
        if sign(*a) == sign(*p) {
            hits += 1;
        }
    }
    Ok(ForecastMetrics {
        rmse: (se / n).sqrt(),
        mae: ae / n,
        hit_rate: hits as f64 / n,
    })
}

/// Index splitting `n` observations 7/8 training, 1/8 test.
pub fn default_split(n: usize) -> usize {
    n * 7 / 8
}

/// Forecast-versus-actual rows: `date, actual, fitted, variance, sample`
/// where `sample` is `train` or `test`.
pub fn write_forecast_csv<W: Write>(
    out: W,
    dates: &[chrono::NaiveDate],
    actual: &[f64],
    fitted: &[f64],
    variance: &[f64],
    split: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "actual", "fitted", "variance", "sample"])?;
    for t in 0..actual.len() {
        w.write_record([
            dates[t].format(crate::market_data::DATE_FORMAT).to_string(),
            actual[t].to_string(),
            fitted[t].to_string(),
            variance[t].to_string(),
            (if t < split { "train" } else { "test" }).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
