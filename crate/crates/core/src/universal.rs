//! Online portfolio selection on the simplex: constant rebalancing, Cover's
//! universal portfolio, and the follow-the-leader strategies built on the
//! hindsight-best constant rebalanced portfolio.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::market_data::{ReturnFrame, ReturnKind, DATE_FORMAT};
use crate::optimizer::Weights;
use crate::rng;

/// One weight row per trading period; row k uses only data before period k.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    rows: Vec<Weights>,
}

impl WeightSchedule {
    pub fn new(rows: Vec<Weights>) -> Result<Self> {
        if let Some(first) = rows.first() {
            if rows.iter().any(|w| w.len() != first.len()) {
                return Err(Error::Dimension("schedule rows differ in length".into()));
            }
        }
        Ok(WeightSchedule { rows })
    }

    pub fn rows(&self) -> &[Weights] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Cumulative wealth starting at 1, one entry more than the number of periods.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthPath {
    pub wealth: Vec<f64>,
}

impl WealthPath {
    pub fn final_wealth(&self) -> f64 {
        *self.wealth.last().expect("wealth path is never empty")
    }
}

/// wealth[k] = wealth[k−1]·(1 + w_kᵀ r_k). A non-positive gross return is
/// reported as ruin.
pub fn wealth_of_schedule(ws: &WeightSchedule, r: &ReturnFrame) -> Result<WealthPath> {
    if r.kind() != ReturnKind::Simple {
        return Err(Error::InvalidInput("wealth compounding needs simple returns".into()));
    }
    if ws.len() != r.len() {
        return Err(Error::Dimension(format!(
            "schedule has {} rows for {} periods",
            ws.len(),
            r.len()
        )));
    }
    if let Some(w) = ws.rows.first() {
        if w.len() != r.n_assets() {
            return Err(Error::Dimension(format!(
                "{} weights for {} assets",
                w.len(),
                r.n_assets()
            )));
        }
    }
    let mut wealth = Vec::with_capacity(r.len() + 1);
    wealth.push(1.0);
    let mut current = 1.0;
    for (k, w) in ws.rows.iter().enumerate() {
        let ret: f64 = w
            .as_slice()
            .iter()
            .zip(r.returns().row(k).iter())
            .map(|(a, b)| a * b)
            .sum();
        let gross = 1.0 + ret;
        if !(gross > 0.0) {
            return Err(Error::Ruin { period: k, gross });
        }
        current *= gross;
        wealth.push(current);
    }
    Ok(WealthPath { wealth })
}

/// The same weights every period.
pub fn crp_schedule(w: &Weights, periods: usize) -> WeightSchedule {
    WeightSchedule {
        rows: vec![w.clone(); periods],
    }
}

fn gross_rows(r: &ReturnFrame) -> Result<Vec<Vec<f64>>> {
    if r.kind() != ReturnKind::Simple {
        return Err(Error::InvalidInput("universal portfolios need simple returns".into()));
    }
    Ok((0..r.len())
        .map(|t| r.returns().row(t).iter().map(|v| 1.0 + v).collect())
        .collect())
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

const BEST_CRP_TOLERANCE: f64 = 1e-8;
const BEST_CRP_MAX_ITER: usize = 500;

/// Average log gross return of `w` over the gross-return rows.
pub fn mean_log_wealth(w: &[f64], gross: &[Vec<f64>]) -> f64 {
    gross
        .iter()
        .map(|x| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().ln())
        .sum::<f64>()
        / gross.len() as f64
}

fn gradient_hessian(w: &[f64], gross: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = w.len();
    let k = gross.len() as f64;
    let mut g = vec![0.0; n];
    let mut h = DMatrix::zeros(n, n);
    for x in gross {
        let p: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        let inv = 1.0 / p;
        for i in 0..n {
            g[i] += x[i] * inv / k;
            let xi = x[i] * inv;
            for j in i..n {
                h[(i, j)] -= xi * x[j] * inv / k;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    (g, h)
}

fn projected_gradient_norm(w: &[f64], g: &[f64]) -> f64 {
    let moved: Vec<f64> = w.iter().zip(g).map(|(a, b)| a + b).collect();
    project_to_simplex(&moved)
        .iter()
        .zip(w)
        .map(|(p, a)| (p - a).abs())
        .fold(0.0, f64::max)
}

/// Newton direction restricted to the free coordinates, constrained to
/// keep the weight sum fixed.
fn newton_direction(w: &[f64], g: &[f64], h: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = w.len();
    let support_max = (0..n)
        .filter(|&i| w[i] > 0.0)
        .map(|i| g[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let free: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0 || g[i] > support_max).collect();
    let m = free.len();
    if m == 0 {
        return None;
    }
    let trace: f64 = free.iter().map(|&i| -h[(i, i)]).sum();
    let ridge = 1e-12 * trace.max(1e-300);
    let mut kkt = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = -h[(i, j)];
        }
        kkt[(a, a)] += ridge;
        kkt[(a, m)] = 1.0;
        kkt[(m, a)] = 1.0;
        rhs[a] = g[i];
    }
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut d = vec![0.0; n];
    for (a, &i) in free.iter().enumerate() {
        d[i] = sol[a];
    }
    Some(d)
}

fn projected_search(
    w: &[f64],
    value: f64,
    g: &[f64],
    direction: &[f64],
    gross: &[Vec<f64>],
) -> Option<(Vec<f64>, f64)> {
    let mut t = 1.0;
    for _ in 0..50 {
        let trial: Vec<f64> = w.iter().zip(direction).map(|(a, d)| a + t * d).collect();
        let candidate = project_to_simplex(&trial);
        let ascent: f64 = candidate.iter().zip(w).zip(g).map(|((c, a), gi)| (c - a) * gi).sum();
        if ascent > 0.0 {
            let v = mean_log_wealth(&candidate, gross);
            if v.is_finite() && v >= value + 1e-4 * ascent {
                return Some((candidate, v));
            }
        }
        t *= 0.5;
    }
    None
}

/// Maximizes mean log gross return over the simplex starting from `start`
/// with projected Newton steps, falling back to projected gradient ascent.
/// Converged when the projected-gradient step `‖P(w + ∇) − w‖∞` is below 1e−8.
pub(crate) fn best_crp_from(gross: &[Vec<f64>], start: &[f64]) -> Result<Vec<f64>> {
    let n = start.len();
    if gross.is_empty() {
        return Ok(vec![1.0 / n as f64; n]);
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut w = project_to_simplex(start);
    let mut value = mean_log_wealth(&w, gross);
    if !value.is_finite() {
        w = vec![1.0 / n as f64; n];
        value = mean_log_wealth(&w, gross);
    }
    let mut pg = f64::INFINITY;
    for _ in 0..BEST_CRP_MAX_ITER {
        let (g, h) = gradient_hessian(&w, gross);
        pg = projected_gradient_norm(&w, &g);
        if pg < BEST_CRP_TOLERANCE {
            return Ok(w);
        }
        let newton = newton_direction(&w, &g, &h)
            .and_then(|d| projected_search(&w, value, &g, &d, gross));
        let step = newton.or_else(|| projected_search(&w, value, &g, &g, gross));
        match step {
            Some((next, v)) => {
                w = next;
                value = v;
            }
            None => break,
        }
    }
    // A stalled line search this close to stationarity is round-off, not failure.
    if pg < 1e-6 {
        let (g, _) = gradient_hessian(&w, gross);
        if projected_gradient_norm(&w, &g) < 1e-6 {
            return Ok(w);
        }
    }
    Err(Error::NoConvergence {
        iterations: BEST_CRP_MAX_ITER,
        best: value,
    })
}

/// Hindsight-best long-only constant rebalanced portfolio: maximizer of
/// Π_k (1 + wᵀr_k) over the simplex.
pub fn best_crp(r: &ReturnFrame) -> Result<Weights> {
    let gross = gross_rows(r)?;
    let n = r.n_assets();
    best_crp_from(&gross, &vec![1.0 / n as f64; n]).map(Weights::from_unchecked)
}

/// Cover's universal portfolio with a uniform prior approximated by
/// `samples` Dirichlet(1,…,1) draws, fixed once from `seed` and reused
/// every period: ŵ_k = Σ_m w_m S_{k−1}(w_m) / Σ_m S_{k−1}(w_m).
pub fn cover_schedule(r: &ReturnFrame, samples: usize, seed: u64) -> Result<WeightSchedule> {
    if samples < 100 {
        return Err(Error::InvalidInput(format!(
            "cover portfolio needs at least 100 samples, got {samples}"
        )));
    }
    let gross = gross_rows(r)?;
    let n = r.n_assets();
    let draws = dirichlet_draws(n, samples, seed);
    let mut log_wealth = vec![0.0; samples];
    let mut rows = Vec::with_capacity(gross.len());
    for x in &gross {
        let max = log_wealth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = vec![0.0; n];
        let mut den = 0.0;
        for (w, lw) in draws.iter().zip(&log_wealth) {
            let a = (lw - max).exp();
            den += a;
            for (acc, wi) in num.iter_mut().zip(w) {
                *acc += a * wi;
            }
        }
        rows.push(Weights::from_unchecked(num.iter().map(|v| v / den).collect()));
        for (w, lw) in draws.iter().zip(log_wealth.iter_mut()) {
            *lw += w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().ln();
        }
    }
    Ok(WeightSchedule { rows })
}

/// Uniform draws on the simplex via normalized unit exponentials.
pub fn dirichlet_draws(n: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed);
    (0..samples)
        .map(|_| {
            let e: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// best_crp over periods 1..j for j = 1..K−1, each warm-started from the
/// previous solution.
fn successive_best(gross: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(gross.len().saturating_sub(1));
    let mut start = vec![1.0 / n as f64; n];
    for j in 1..gross.len() {
        let b = best_crp_from(&gross[..j], &start)?;
        start = b.clone();
        out.push(b);
    }
    Ok(out)
}

/// Follow-the-leader: row 1 uniform, row k the best CRP over periods 1..k−1.
pub fn scrp_schedule(r: &ReturnFrame) -> Result<WeightSchedule> {
    let gross = gross_rows(r)?;
    let n = r.n_assets();
    if gross.is_empty() {
        return Ok(WeightSchedule { rows: vec![] });
    }
    let mut rows = vec![Weights::uniform(n)];
    rows.extend(successive_best(&gross, n)?.into_iter().map(Weights::from_unchecked));
    Ok(WeightSchedule { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WacrpWeighting {
    /// Each past best CRP weighted by the wealth it realized over its own
    /// fitting window.
    #[default]
    RealizedWealth,
    Uniform,
}

/// Row 1 uniform; row k the weighted average of best_crp(1..j), j < k.
pub fn wacrp_schedule(r: &ReturnFrame, weighting: WacrpWeighting) -> Result<WeightSchedule> {
    let gross = gross_rows(r)?;
    let n = r.n_assets();
    if gross.is_empty() {
        return Ok(WeightSchedule { rows: vec![] });
    }
    let leaders = successive_best(&gross, n)?;
    let mut rows = vec![Weights::uniform(n)];
    let mut num = vec![0.0; n];
    let mut den = 0.0;
    let mut scale = f64::NEG_INFINITY;
    for (idx, b) in leaders.iter().enumerate() {
        let j = idx + 1;
        let log_weight = match weighting {
            WacrpWeighting::RealizedWealth => gross[..j]
                .iter()
                .map(|x| b.iter().zip(x).map(|(a, v)| a * v).sum::<f64>().ln())
                .sum::<f64>(),
            WacrpWeighting::Uniform => 0.0,
        };
        if log_weight > scale {
            let shrink = (scale - log_weight).exp();
            num.iter_mut().for_each(|v| *v *= shrink);
            den *= shrink;
            scale = log_weight;
        }
        let a = (log_weight - scale).exp();
        den += a;
        for (acc, bi) in num.iter_mut().zip(b) {
            *acc += a * bi;
        }
        rows.push(Weights::from_unchecked(num.iter().map(|v| v / den).collect()));
    }
    Ok(WeightSchedule { rows })
}

/// CSV with columns `date, w_1..w_n, wealth`; each row holds the weights
/// used during the period and the wealth at its end.
pub fn write_schedule_csv<W: Write>(
    out: W,
    dates: &[NaiveDate],
    assets: &[String],
    schedule: &WeightSchedule,
    wealth: &WealthPath,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(assets.iter().map(|a| format!("w_{a}")));
    header.push("wealth".into());
    w.write_record(&header)?;
    for (k, row) in schedule.rows().iter().enumerate() {
        let mut rec = vec![dates[k].format(DATE_FORMAT).to_string()];
        rec.extend(row.as_slice().iter().map(|v| v.to_string()));
        rec.push(wealth.wealth[k + 1].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
