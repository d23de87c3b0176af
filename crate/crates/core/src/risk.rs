//! Value at Risk and Expected Shortfall.
//!
//! Losses are positive: VaR = −S·q(α) where q(α) is the α-quantile of the
//! per-period return and S the position value. ES is the loss averaged over
//! the tail at or beyond the VaR threshold.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::optim::{self, BfgsOptions};
use crate::{rng, stats};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_REPLICATES: usize = 500;
pub const NU_MAX: f64 = 200.0;
const NU_MIN: f64 = 2.0;
/// Redraws allowed per bootstrap replicate before giving up.
const MAX_REDRAWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    ParametricT,
    Historical,
    Gaussian,
    CornishFisher,
}

impl RiskMethod {
    pub const ALL: [RiskMethod; 4] = [
        RiskMethod::ParametricT,
        RiskMethod::Historical,
        RiskMethod::Gaussian,
        RiskMethod::CornishFisher,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskMethod::ParametricT => "parametric_t",
            RiskMethod::Historical => "historical",
            RiskMethod::Gaussian => "gaussian",
            RiskMethod::CornishFisher => "cornish_fisher",
        }
    }
}

impl fmt::Display for RiskMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RiskMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown risk method {s:?}")))
    }
}

/// Location-scale Student-t fitted by maximum likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TFit {
    pub nu: f64,
    pub location: f64,
    pub scale: f64,
    /// Total log-likelihood of the original data.
    pub log_likelihood: f64,
}

impl TFit {
    pub fn new(nu: f64, location: f64, scale: f64) -> Result<Self> {
        if !(nu > 1.0) || !location.is_finite() || !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "invalid t parameters nu={nu}, location={location}, scale={scale}"
            )));
        }
        Ok(TFit {
            nu,
            location,
            scale,
            log_likelihood: f64::NAN,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub method: RiskMethod,
    pub alpha: f64,
    #[serde(rename = "S")]
    pub position: f64,
    pub var: f64,
    pub es: f64,
}

fn check_args(position: f64, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 0.5]")));
    }
    if !(position > 0.0) || !position.is_finite() {
        return Err(Error::InvalidInput(format!("position {position} must be positive")));
    }
    Ok(())
}

fn check_series(returns: &[f64], min_len: usize) -> Result<()> {
    if returns.len() < min_len {
        return Err(Error::InvalidInput(format!(
            "need at least {min_len} returns, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("returns contain non-finite values".into()));
    }
    Ok(())
}

fn nu_of(a: f64) -> f64 {
    NU_MIN + (NU_MAX - NU_MIN) / (1.0 + (-a).exp())
}

/// Mean log-density of standardized data under t(nu, loc, scale), together
/// with its gradient in (loc, ln scale, a) where nu = nu_of(a).
fn t_loglik(z: &[f64], theta: &[f64]) -> (f64, [f64; 3]) {
    let (loc, log_scale, a) = (theta[0], theta[1], theta[2]);
    let nu = nu_of(a);
    let scale = log_scale.exp();
    let n = z.len() as f64;
    let konst = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln();
    let mut ll = 0.0;
    let (mut d_loc, mut d_log_scale, mut d_nu) = (0.0, 0.0, 0.0);
    for &x in z {
        let u = (x - loc) / scale;
        let u2 = u * u;
        let log_term = (u2 / nu).ln_1p();
        ll += -0.5 * (nu + 1.0) * log_term;
        let denom = nu + u2;
        d_loc += (nu + 1.0) * u / denom;
        d_log_scale += (nu + 1.0) * u2 / denom;
        d_nu += -0.5 * log_term + 0.5 * (nu + 1.0) * u2 / (nu * denom);
    }
    let value = konst - log_scale + ll / n;
    let dnu_da = {
        let s = 1.0 / (1.0 + (-a).exp());
        (NU_MAX - NU_MIN) * s * (1.0 - s)
    };
    let d_konst = 0.5 * digamma(0.5 * (nu + 1.0)) - 0.5 * digamma(0.5 * nu) - 0.5 / nu;
    let grad = [
        d_loc / (n * scale),
        -1.0 + d_log_scale / n,
        (d_konst + d_nu / n) * dnu_da,
    ];
    (value, grad)
}

/// Maximum-likelihood location-scale Student-t with nu in (2, 200].
pub fn fit_student_t(returns: &[f64]) -> Result<TFit> {
    check_series(returns, 10)?;
    let m = stats::mean(returns);
    let sd = stats::std_dev(returns);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("returns have zero variance".into()));
    }
    let z: Vec<f64> = returns.iter().map(|r| (r - m) / sd).collect();
    // nu = 8 at the start.
    let a0 = -((NU_MAX - NU_MIN) / 6.0 - 1.0).ln();
    let opts = BfgsOptions {
        max_iterations: 1000,
        gradient_tolerance: 1e-9,
        improvement_tolerance: 0.0,
    };
    let mut min = optim::minimize(
        |th| -t_loglik(&z, th).0,
        |th| t_loglik(&z, th).1.iter().map(|g| -g).collect(),
        &[0.0, 0.0, a0],
        opts,
    );
    // The likelihood is nearly flat in nu for large nu, so BFGS can stall
    // short of the optimum. Newton steps on the gradient pin it down, which
    // keeps the fit equivariant under shifts of the data.
    for _ in 0..20 {
        let (value, grad) = t_loglik(&z, &min.x);
        let g = DVector::from_column_slice(&grad);
        if g.norm() < 1e-13 {
            break;
        }
        let hess = DMatrix::from_fn(3, 3, |i, j| {
            let h = 1e-5 * min.x[j].abs().max(1.0);
            let (mut up, mut down) = (min.x.clone(), min.x.clone());
            up[j] += h;
            down[j] -= h;
            (t_loglik(&z, &up).1[i] - t_loglik(&z, &down).1[i]) / (2.0 * h)
        });
        let hess = (&hess + hess.transpose()) * 0.5;
        let Some(step) = hess.lu().solve(&g) else { break };
        let x: Vec<f64> = min.x.iter().zip(step.iter()).map(|(a, d)| a - d).collect();
        let (new_value, new_grad) = t_loglik(&z, &x);
        let new_norm = DVector::from_column_slice(&new_grad).norm();
        if !(new_norm < g.norm()) || !(new_value >= value - 1e-12) {
            break;
        }
        min.x = x;
        min.value = -new_value;
        min.gradient_norm = new_norm;
    }
    if !(min.gradient_norm < 1e-6) || !min.value.is_finite() {
        return Err(Error::NoConvergence {
            iterations: min.iterations,
            best: -min.value,
        });
    }
    let n = returns.len() as f64;
    Ok(TFit {
        nu: nu_of(min.x[2]),
        location: m + sd * min.x[0],
        scale: sd * min.x[1].exp(),
        log_likelihood: n * (-min.value - sd.ln()),
    })
}

/// Mean of a standard t(nu) variable conditional on being at most `q`,
/// where `q` is its `alpha` quantile.
fn t_tail_mean(nu: f64, q: f64, alpha: f64) -> f64 {
    let log_pdf = ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * (nu + 1.0) * (q * q / nu).ln_1p();
    -(nu + q * q) / (nu - 1.0) * log_pdf.exp() / alpha
}

pub fn var_es_parametric_t(fit: &TFit, position: f64, alpha: f64) -> Result<RiskEstimate> {
    check_args(position, alpha)?;
    if !(fit.nu > 1.0) {
        return Err(Error::InvalidInput(format!(
            "expected shortfall needs nu > 1, got {}",
            fit.nu
        )));
    }
    let dist = StudentsT::new(0.0, 1.0, fit.nu)
        .map_err(|e| Error::InvalidInput(format!("t distribution: {e}")))?;
    let q = if alpha == 0.5 { 0.0 } else { dist.inverse_cdf(alpha) };
    let tail = t_tail_mean(fit.nu, q, alpha);
    Ok(RiskEstimate {
        method: RiskMethod::ParametricT,
        alpha,
        position,
        var: -position * (fit.location + fit.scale * q),
        es: -position * (fit.location + fit.scale * tail),
    })
}

/// Empirical VaR at the ⌈αn⌉-th order statistic; ES averages the returns at
/// or below it.
pub fn var_es_historical(returns: &[f64], position: f64, alpha: f64) -> Result<RiskEstimate> {
    check_args(position, alpha)?;
    check_series(returns, 1)?;
    let n = returns.len();
    if (n as f64) * alpha < 1.0 - 1e-9 {
        return Err(Error::InvalidInput(format!(
            "{n} returns leave an empty tail at alpha {alpha}"
        )));
    }
    let q = stats::order_statistic_quantile(returns, alpha);
    let tail: Vec<f64> = returns.iter().copied().filter(|r| *r <= q).collect();
    Ok(RiskEstimate {
        method: RiskMethod::Historical,
        alpha,
        position,
        var: -position * q,
        es: -position * stats::mean(&tail),
    })
}

fn degenerate(method: RiskMethod, m: f64, position: f64, alpha: f64) -> RiskEstimate {
    RiskEstimate {
        method,
        alpha,
        position,
        var: -position * m,
        es: -position * m,
    }
}

pub fn var_es_gaussian(returns: &[f64], position: f64, alpha: f64) -> Result<RiskEstimate> {
    check_args(position, alpha)?;
    check_series(returns, 2)?;
    let m = stats::mean(returns);
    let s = stats::std_dev(returns);
    if s == 0.0 {
        return Ok(degenerate(RiskMethod::Gaussian, m, position, alpha));
    }
    let z = stats::normal_quantile(alpha);
    let tail = -stats::normal_pdf(z) / alpha;
    Ok(RiskEstimate {
        method: RiskMethod::Gaussian,
        alpha,
        position,
        var: -position * (m + s * z),
        es: -position * (m + s * tail),
    })
}

/// Third-order Cornish-Fisher quantile for skewness `skew` and excess
/// kurtosis `exkurt`.
pub fn cornish_fisher_quantile(z: f64, skew: f64, exkurt: f64) -> f64 {
    z + (z * z - 1.0) * skew / 6.0 + (z * z * z - 3.0 * z) * exkurt / 24.0
        - (2.0 * z * z * z - 5.0 * z) * skew * skew / 36.0
}

/// E[g(Z) | Z ≤ z_α] for the Cornish-Fisher map g, from the partial
/// moments of the standard normal below z_α.
fn cornish_fisher_tail_mean(z: f64, alpha: f64, skew: f64, exkurt: f64) -> f64 {
    let phi = stats::normal_pdf(z);
    let m0 = alpha;
    let m1 = -phi;
    let m2 = -z * phi + m0;
    let m3 = -z * z * phi + 2.0 * m1;
    let sum = m1 + skew / 6.0 * (m2 - m0) + exkurt / 24.0 * (m3 - 3.0 * m1)
        - skew * skew / 36.0 * (2.0 * m3 - 5.0 * m1);
    sum / alpha
}

/// Gaussian VaR/ES with the normal quantile replaced by its Cornish-Fisher
/// adjustment. ES is the tail mean of the adjusted distribution, so that it
/// stays at or above VaR. A sample whose skew and kurtosis make the
/// expansion non-monotone in the tail is rejected.
pub fn var_es_cornish_fisher(returns: &[f64], position: f64, alpha: f64) -> Result<RiskEstimate> {
    check_args(position, alpha)?;
    check_series(returns, 4)?;
    let m = stats::mean(returns);
    let s = stats::std_dev(returns);
    if s == 0.0 {
        return Ok(degenerate(RiskMethod::CornishFisher, m, position, alpha));
    }
    let (skew, exkurt) = stats::skew_kurtosis(returns);
    let z = stats::normal_quantile(alpha);
    let zq = cornish_fisher_quantile(z, skew, exkurt);
    let tail = cornish_fisher_tail_mean(z, alpha, skew, exkurt);
    let est = RiskEstimate {
        method: RiskMethod::CornishFisher,
        alpha,
        position,
        var: -position * (m + s * zq),
        es: -position * (m + s * tail),
    };
    if est.es < est.var {
        return Err(Error::Degenerate(format!(
            "Cornish-Fisher expansion is not monotone at skew {skew:.3}, excess kurtosis {exkurt:.3}"
        )));
    }
    Ok(est)
}

/// Point estimate for any method; the parametric method fits a t first.
pub fn estimate(returns: &[f64], position: f64, alpha: f64, method: RiskMethod) -> Result<RiskEstimate> {
    match method {
        RiskMethod::ParametricT => var_es_parametric_t(&fit_student_t(returns)?, position, alpha),
        RiskMethod::Historical => var_es_historical(returns, position, alpha),
        RiskMethod::Gaussian => var_es_gaussian(returns, position, alpha),
        RiskMethod::CornishFisher => var_es_cornish_fisher(returns, position, alpha),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapCI {
    pub point: RiskEstimate,
    pub var_lower: f64,
    pub var_upper: f64,
    pub es_lower: f64,
    pub es_upper: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Basic bootstrap interval [2θ̂ − q̂(0.975), 2θ̂ − q̂(0.025)] for VaR and ES.
/// Replicate `b` draws from substream `b` of `seed`, so the result does not
/// depend on thread scheduling.
pub fn bootstrap_ci(
    returns: &[f64],
    position: f64,
    alpha: f64,
    method: RiskMethod,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapCI> {
    if method == RiskMethod::ParametricT {
        return Err(Error::InvalidInput(
            "bootstrap supports historical, gaussian and cornish_fisher".into(),
        ));
    }
    if replicates < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 bootstrap replicates, got {replicates}"
        )));
    }
    let point = estimate(returns, position, alpha, method)?;
    let n = returns.len();

    let draws: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::substream(seed, b as u64);
            let mut sample = vec![0.0; n];
            let mut last_err = None;
            for _ in 0..MAX_REDRAWS {
                for x in sample.iter_mut() {
                    *x = returns[rng.random_range(0..n)];
                }
                match estimate(&sample, position, alpha, method) {
                    Ok(e) => return Ok((e.var, e.es)),
                    Err(e) => last_err = Some(e),
                }
            }
            Err(last_err.expect("at least one draw was attempted"))
        })
        .collect::<Result<_>>()?;

    let mut vars: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mut ess: Vec<f64> = draws.iter().map(|d| d.1).collect();
    vars.sort_by(f64::total_cmp);
    ess.sort_by(f64::total_cmp);
    let basic = |theta: f64, sorted: &[f64]| {
        let lower = 2.0 * theta - stats::quantile_sorted(sorted, 0.975);
        let upper = 2.0 * theta - stats::quantile_sorted(sorted, 0.025);
        (lower, upper)
    };
    let (var_lower, var_upper) = basic(point.var, &vars);
    let (es_lower, es_upper) = basic(point.es, &ess);
    Ok(BootstrapCI {
        point,
        var_lower,
        var_upper,
        es_lower,
        es_upper,
        replicates,
        seed,
    })
}

/// One row of a risk report; the interval fields are empty for estimates
/// made without a bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub series: String,
    pub method: RiskMethod,
    pub alpha: f64,
    #[serde(rename = "S")]
    pub position: f64,
    pub var: f64,
    pub es: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub es_ci_lower: Option<f64>,
    pub es_ci_upper: Option<f64>,
    #[serde(rename = "B")]
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
}

impl RiskReport {
    pub fn from_estimate(series: &str, e: &RiskEstimate) -> Self {
        RiskReport {
            series: series.to_string(),
            method: e.method,
            alpha: e.alpha,
            position: e.position,
            var: e.var,
            es: e.es,
            ci_lower: None,
            ci_upper: None,
            es_ci_lower: None,
            es_ci_upper: None,
            replicates: None,
            seed: None,
        }
    }

    pub fn from_bootstrap(series: &str, ci: &BootstrapCI) -> Self {
        RiskReport {
            ci_lower: Some(ci.var_lower),
            ci_upper: Some(ci.var_upper),
            es_ci_lower: Some(ci.es_lower),
            es_ci_upper: Some(ci.es_upper),
            replicates: Some(ci.replicates),
            seed: Some(ci.seed),
            ..RiskReport::from_estimate(series, &ci.point)
        }
    }
}

pub fn write_report_csv<W: Write>(out: W, rows: &[RiskReport]) -> Result<()> {
    use crate::market_data::fmt_opt;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "series", "method", "alpha", "S", "var", "es", "ci_lower", "ci_upper", "es_ci_lower",
        "es_ci_upper", "B", "seed",
    ])?;
    for r in rows {
        w.write_record([
            r.series.clone(),
            r.method.to_string(),
            r.alpha.to_string(),
            r.position.to_string(),
            r.var.to_string(),
            r.es.to_string(),
            fmt_opt(r.ci_lower),
            fmt_opt(r.ci_upper),
            fmt_opt(r.es_ci_lower),
            fmt_opt(r.es_ci_upper),
            r.replicates.map_or_else(|| "NA".into(), |b| b.to_string()),
            r.seed.map_or_else(|| "NA".into(), |s| s.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
