//! C ABI for portfolio-analytics.
//!
//! Every function returns a [`PaStatus`]. On failure the message is kept in
//! thread-local storage and can be read with [`pa_last_error`]. Handles are
//! opaque; free them with the matching `_free` function. Matrices are
//! row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use portfolio_analytics::market_data::{self, ReturnFrame, ReturnKind};
use portfolio_analytics::moments::{self, EstimatorOptions, MomentEstimate, ModelTag};
use portfolio_analytics::{optimizer, risk, spt, universal, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Dimension = 3,
    IllConditioned = 4,
    Degenerate = 5,
    NoConvergence = 6,
    Io = 7,
    Panic = 8,
    BufferTooSmall = 9,
}

/// Moment estimator selector for [`pa_moments_estimate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaModel {
    Mm = 0,
    Ccm = 1,
    Sim = 2,
}

/// Risk method selector for [`pa_var_es`] and [`pa_bootstrap_ci`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaRiskMethod {
    ParametricT = 0,
    Historical = 1,
    Gaussian = 2,
    CornishFisher = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PaRiskEstimate {
    pub var: f64,
    pub es: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PaBootstrap {
    pub var: f64,
    pub es: f64,
    pub var_lower: f64,
    pub var_upper: f64,
    pub es_lower: f64,
    pub es_upper: f64,
}

/// Simple returns, periods × assets.
pub struct PaReturns(ReturnFrame);

/// Expected returns and covariance.
pub struct PaMoments(MomentEstimate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => PaStatus::Io,
            Error::Cell { .. } | Error::InvalidInput(_) => PaStatus::InvalidInput,
            Error::Dimension(_) => PaStatus::Dimension,
            Error::IllConditioned { .. } | Error::Collinear { .. } | Error::TangencyAtInfinity { .. } => {
                PaStatus::IllConditioned
            }
            Error::Degenerate(_) | Error::Ruin { .. } => PaStatus::Degenerate,
            Error::NoConvergence { .. } => PaStatus::NoConvergence,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: PaStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> PaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            PaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PaStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(PaStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(fail(PaStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(PaStatus::NullPointer, format!("{what} is null")))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Failure> {
    if dst.len() < src.len() {
        return Err(fail(
            PaStatus::BufferTooSmall,
            format!("output holds {} values, {} needed", dst.len(), src.len()),
        ));
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

fn risk_method(m: i32) -> Result<risk::RiskMethod, Failure> {
    Ok(match m {
        0 => risk::RiskMethod::ParametricT,
        1 => risk::RiskMethod::Historical,
        2 => risk::RiskMethod::Gaussian,
        3 => risk::RiskMethod::CornishFisher,
        _ => return Err(fail(PaStatus::InvalidInput, format!("unknown risk method {m}"))),
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next `pa_` call on the same thread.
#[no_mangle]
pub extern "C" fn pa_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a return frame from a row-major `periods × assets` array of
/// simple returns.
///
/// # Safety
/// `data` must point to `periods * assets` doubles and `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn pa_returns_new(
    data: *const f64,
    periods: usize,
    assets: usize,
    out: *mut *mut PaReturns,
) -> PaStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PaStatus::NullPointer, "out is null"));
        }
        let values = slice(data, periods * assets, "data")?;
        let m = DMatrix::from_row_slice(periods, assets, values);
        let names = (1..=assets).map(|j| format!("a{j}")).collect();
        let frame = ReturnFrame::new(market_data::placeholder_dates(periods), names, m, ReturnKind::Simple)?;
        *out = Box::into_raw(Box::new(PaReturns(frame)));
        Ok(())
    })
}

/// Reads a wide price CSV and converts it to simple returns.
///
/// # Safety
/// `path` and `date_column` must be NUL-terminated strings; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pa_returns_from_prices_csv(
    path: *const c_char,
    date_column: *const c_char,
    out: *mut *mut PaReturns,
) -> PaStatus {
    guard(|| {
        if path.is_null() || date_column.is_null() || out.is_null() {
            return Err(fail(PaStatus::NullPointer, "null argument"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(PaStatus::InvalidInput, "path is not UTF-8"))?;
        let date_column = CStr::from_ptr(date_column)
            .to_str()
            .map_err(|_| fail(PaStatus::InvalidInput, "date column is not UTF-8"))?;
        let prices = market_data::load_prices(path, date_column)?;
        let frame = market_data::compute_returns(&prices, ReturnKind::Simple);
        *out = Box::into_raw(Box::new(PaReturns(frame)));
        Ok(())
    })
}

/// # Safety
/// `r` must come from a `pa_returns_` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pa_returns_free(r: *mut PaReturns) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pa_returns_periods(r: *const PaReturns) -> usize {
    r.as_ref().map_or(0, |r| r.0.len())
}

/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pa_returns_assets(r: *const PaReturns) -> usize {
    r.as_ref().map_or(0, |r| r.0.n_assets())
}

/// Estimates moments with the chosen model. `market` (length = periods) is
/// required for `Sim` and ignored otherwise.
///
/// # Safety
/// `r` must be a live handle, `market` null or valid for `periods` reads,
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pa_moments_estimate(
    r: *const PaReturns,
    model: i32,
    market: *const f64,
    out: *mut *mut PaMoments,
) -> PaStatus {
    guard(|| {
        let r = &handle(r, "returns")?.0;
        if out.is_null() {
            return Err(fail(PaStatus::NullPointer, "out is null"));
        }
        let m = match model {
            0 => moments::sample_moments(r)?,
            1 => moments::constant_correlation_moments(r)?,
            2 => {
                let market = slice(market, r.len(), "market")?;
                let fit = moments::single_index_fit(r, market)?;
                let mu_m = market.iter().sum::<f64>() / market.len().max(1) as f64;
                moments::single_index_moments_with(&fit, mu_m, EstimatorOptions::default())?
            }
            _ => return Err(fail(PaStatus::InvalidInput, format!("unknown model {model}"))),
        };
        *out = Box::into_raw(Box::new(PaMoments(m)));
        Ok(())
    })
}

/// Wraps caller-supplied moments; `sigma` is row-major n × n.
///
/// # Safety
/// `mu` must hold `n` doubles, `sigma` `n * n`, and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pa_moments_new(
    mu: *const f64,
    sigma: *const f64,
    n: usize,
    out: *mut *mut PaMoments,
) -> PaStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PaStatus::NullPointer, "out is null"));
        }
        let mu = slice(mu, n, "mu")?.to_vec();
        let sigma = DMatrix::from_row_slice(n, n, slice(sigma, n * n, "sigma")?);
        *out = Box::into_raw(Box::new(PaMoments(MomentEstimate::new(mu, sigma, ModelTag::MM)?)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from a `pa_moments_` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pa_moments_free(m: *mut PaMoments) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pa_moments_n(m: *const PaMoments) -> usize {
    m.as_ref().map_or(0, |m| m.0.n())
}

/// Copies mu (n values) and sigma (n × n, row-major) out of the handle.
/// Either output may be null to skip it.
///
/// # Safety
/// Non-null outputs must hold `n` and `n * n` doubles respectively.
#[no_mangle]
pub unsafe extern "C" fn pa_moments_get(m: *const PaMoments, mu: *mut f64, sigma: *mut f64) -> PaStatus {
    guard(|| {
        let m = &handle(m, "moments")?.0;
        let n = m.n();
        if !mu.is_null() {
            slice_mut(mu, n, "mu")?.copy_from_slice(&m.mu);
        }
        if !sigma.is_null() {
            let out = slice_mut(sigma, n * n, "sigma")?;
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = m.sigma[(i, j)];
                }
            }
        }
        Ok(())
    })
}

/// Sharpe-maximizing weights (summing to 1) at risk-free rate `rf`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pa_tangent_weights(m: *const PaMoments, rf: f64, out: *mut f64, len: usize) -> PaStatus {
    guard(|| {
        let w = optimizer::tangent_weights(&handle(m, "moments")?.0, rf)?;
        copy_out(w.as_slice(), slice_mut(out, len, "out")?)
    })
}

/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pa_min_variance_weights(m: *const PaMoments, out: *mut f64, len: usize) -> PaStatus {
    guard(|| {
        let w = optimizer::min_variance_weights(&handle(m, "moments")?.0)?;
        copy_out(w.as_slice(), slice_mut(out, len, "out")?)
    })
}

/// Hindsight-best long-only constant rebalanced portfolio.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pa_best_crp(r: *const PaReturns, out: *mut f64, len: usize) -> PaStatus {
    guard(|| {
        let w = universal::best_crp(&handle(r, "returns")?.0)?;
        copy_out(w.as_slice(), slice_mut(out, len, "out")?)
    })
}

/// Cover's universal portfolio schedule, periods × assets row-major.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pa_cover_schedule(
    r: *const PaReturns,
    samples: usize,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> PaStatus {
    guard(|| {
        let schedule = universal::cover_schedule(&handle(r, "returns")?.0, samples, seed)?;
        let flat: Vec<f64> = schedule.rows().iter().flat_map(|w| w.as_slice().iter().copied()).collect();
        copy_out(&flat, slice_mut(out, len, "out")?)
    })
}

/// Diversity-weighted portfolio of one row of market weights.
///
/// # Safety
/// `mu` must hold `n` doubles and `out` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pa_dwp_weights(mu: *const f64, n: usize, p: f64, out: *mut f64) -> PaStatus {
    guard(|| {
        let w = spt::dwp_weights(slice(mu, n, "mu")?, p)?;
        copy_out(w.as_slice(), slice_mut(out, n, "out")?)
    })
}

/// Value at risk and expected shortfall of a return series for position
/// `position` at tail probability `alpha`.
///
/// # Safety
/// `returns` must hold `len` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pa_var_es(
    returns: *const f64,
    len: usize,
    position: f64,
    alpha: f64,
    method: i32,
    out: *mut PaRiskEstimate,
) -> PaStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PaStatus::NullPointer, "out is null"));
        }
        let est = risk::estimate(slice(returns, len, "returns")?, position, alpha, risk_method(method)?)?;
        *out = PaRiskEstimate {
            var: est.var,
            es: est.es,
        };
        Ok(())
    })
}

/// Basic bootstrap 95% intervals for VaR and ES. The parametric t method
/// is not supported here.
///
/// # Safety
/// `returns` must hold `len` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pa_bootstrap_ci(
    returns: *const f64,
    len: usize,
    position: f64,
    alpha: f64,
    method: i32,
    replicates: usize,
    seed: u64,
    out: *mut PaBootstrap,
) -> PaStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PaStatus::NullPointer, "out is null"));
        }
        let returns = slice(returns, len, "returns")?;
        let ci = risk::bootstrap_ci(returns, position, alpha, risk_method(method)?, replicates, seed)?;
        *out = PaBootstrap {
            var: ci.point.var,
            es: ci.point.es,
            var_lower: ci.var_lower,
            var_upper: ci.var_upper,
            es_lower: ci.es_lower,
            es_upper: ci.es_upper,
        };
        Ok(())
    })
}
