//! Price, return and factor panels: loading, validation, alignment and
//! descriptive statistics.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Date-indexed panel of strictly positive prices, one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceFrame {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    prices: DMatrix<f64>,
    dropped_rows: usize,
}

impl PriceFrame {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if assets.is_empty() {
            return Err(Error::InvalidInput("price frame needs at least one asset".into()));
        }
        if dates.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "price frame needs at least 2 dates, got {}",
                dates.len()
            )));
        }
        if prices.nrows() != dates.len() || prices.ncols() != assets.len() {
            return Err(Error::Dimension(format!(
                "prices are {}x{}, expected {}x{}",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                assets.len()
            )));
        }
        check_increasing(&dates)?;
        for t in 0..prices.nrows() {
            for j in 0..prices.ncols() {
                let p = prices[(t, j)];
                if !(p > 0.0) || !p.is_finite() {
                    return Err(Error::Cell {
                        row: t + 1,
                        column: assets[j].clone(),
                        message: format!("price must be finite and strictly positive, got {p}"),
                    });
                }
            }
        }
        Ok(PriceFrame {
            dates,
            assets,
            prices,
            dropped_rows: 0,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    /// T×n price matrix.
    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Rows discarded at load time because a cell was missing.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_panel(out, "date", &self.dates, &self.assets, |t, j| self.prices[(t, j)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    Simple,
    Log,
}

impl FromStr for ReturnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simple" => Ok(ReturnKind::Simple),
            "log" => Ok(ReturnKind::Log),
            other => Err(Error::InvalidInput(format!("unknown return kind '{other}'"))),
        }
    }
}

/// Per-period returns aligned across assets. The kind is fixed at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnFrame {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    returns: DMatrix<f64>,
    kind: ReturnKind,
}

impl ReturnFrame {
    pub fn new(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        returns: DMatrix<f64>,
        kind: ReturnKind,
    ) -> Result<Self> {
        if returns.nrows() != dates.len() || returns.ncols() != assets.len() {
            return Err(Error::Dimension(format!(
                "returns are {}x{}, expected {}x{}",
                returns.nrows(),
                returns.ncols(),
                dates.len(),
                assets.len()
            )));
        }
        if assets.is_empty() {
            return Err(Error::InvalidInput("return frame needs at least one asset".into()));
        }
        check_increasing(&dates)?;
        for t in 0..returns.nrows() {
            for j in 0..returns.ncols() {
                let r = returns[(t, j)];
                let ok = match kind {
                    ReturnKind::Simple => r.is_finite() && r > -1.0,
                    ReturnKind::Log => r.is_finite(),
                };
                if !ok {
                    return Err(Error::Cell {
                        row: t + 1,
                        column: assets[j].clone(),
                        message: format!("invalid {kind:?} return {r}"),
                    });
                }
            }
        }
        Ok(ReturnFrame {
            dates,
            assets,
            returns,
            kind,
        })
    }

    /// Builds a simple-return frame with placeholder dates, one per row.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("ragged return rows".into()));
        }
        let returns = DMatrix::from_fn(rows.len(), n, |t, j| rows[t][j]);
        let assets = (1..=n).map(|j| format!("a{j}")).collect();
        ReturnFrame::new(placeholder_dates(rows.len()), assets, returns, ReturnKind::Simple)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    /// (T−1)×n return matrix.
    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn kind(&self) -> ReturnKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn asset(&self, j: usize) -> Vec<f64> {
        self.returns.column(j).iter().copied().collect()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.returns.row(t).iter().copied().collect()
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> ReturnFrame {
        ReturnFrame {
            dates: self.dates[start..end].to_vec(),
            assets: self.assets.clone(),
            returns: self.returns.rows(start, end - start).into_owned(),
            kind: self.kind,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_panel(out, "date", &self.dates, &self.assets, |t, j| self.returns[(t, j)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    MarketReturn,
    RiskFree,
    Smb,
    Hml,
    Volume,
    Inflation,
    Gdp,
    Cpi,
    Unemployment,
}

impl FactorKind {
    pub const ALL: [FactorKind; 9] = [
        FactorKind::MarketReturn,
        FactorKind::RiskFree,
        FactorKind::Smb,
        FactorKind::Hml,
        FactorKind::Volume,
        FactorKind::Inflation,
        FactorKind::Gdp,
        FactorKind::Cpi,
        FactorKind::Unemployment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FactorKind::MarketReturn => "market_return",
            FactorKind::RiskFree => "risk_free",
            FactorKind::Smb => "smb",
            FactorKind::Hml => "hml",
            FactorKind::Volume => "volume",
            FactorKind::Inflation => "inflation",
            FactorKind::Gdp => "gdp",
            FactorKind::Cpi => "cpi",
            FactorKind::Unemployment => "unemployment",
        }
    }
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FactorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        FactorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown factor column '{s}'")))
    }
}

/// Date-indexed factor series. The risk-free column, when present, is a
/// per-period rate at the same periodicity as the returns.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    dates: Vec<NaiveDate>,
    columns: Vec<FactorKind>,
    values: Vec<Vec<f64>>,
}

impl FactorPanel {
    pub fn new(dates: Vec<NaiveDate>, columns: Vec<FactorKind>, values: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != values.len() {
            return Err(Error::Dimension("one value series per factor column required".into()));
        }
        for (kind, series) in columns.iter().zip(&values) {
            if series.len() != dates.len() {
                return Err(Error::Dimension(format!(
                    "factor '{kind}' has {} values for {} dates",
                    series.len(),
                    dates.len()
                )));
            }
            if let Some(t) = series.iter().position(|v| !v.is_finite()) {
                return Err(Error::Cell {
                    row: t + 1,
                    column: kind.to_string(),
                    message: "non-finite factor value".into(),
                });
            }
        }
        for (i, kind) in columns.iter().enumerate() {
            if columns[..i].contains(kind) {
                return Err(Error::InvalidInput(format!("duplicate factor column '{kind}'")));
            }
        }
        check_increasing(&dates)?;
        Ok(FactorPanel {
            dates,
            columns,
            values,
        })
    }

    /// A panel with dates only, for callers that need no factors.
    pub fn empty(dates: Vec<NaiveDate>) -> Result<Self> {
        FactorPanel::new(dates, Vec::new(), Vec::new())
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn columns(&self) -> &[FactorKind] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn get(&self, kind: FactorKind) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|k| *k == kind)
            .map(|i| self.values[i].as_slice())
    }

    pub fn require(&self, kind: FactorKind) -> Result<&[f64]> {
        self.get(kind)
            .ok_or_else(|| Error::InvalidInput(format!("factor panel lacks required column '{kind}'")))
    }

    pub fn slice(&self, start: usize, end: usize) -> FactorPanel {
        FactorPanel {
            dates: self.dates[start..end].to_vec(),
            columns: self.columns.clone(),
            values: self.values.iter().map(|v| v[start..end].to_vec()).collect(),
        }
    }

    fn select_rows(&self, rows: &[usize]) -> FactorPanel {
        FactorPanel {
            dates: rows.iter().map(|&t| self.dates[t]).collect(),
            columns: self.columns.clone(),
            values: self
                .values
                .iter()
                .map(|v| rows.iter().map(|&t| v[t]).collect())
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let names: Vec<String> = self.columns.iter().map(|k| k.to_string()).collect();
        write_panel(out, "date", &self.dates, &names, |t, j| self.values[j][t])
    }
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "dates must be strictly increasing: {} is followed by {}",
            dates[i],
            dates[i + 1]
        )));
    }
    Ok(())
}

/// Consecutive calendar days from 2000-01-01, used where only ordering matters.
pub fn placeholder_dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    start.iter_days().take(n).collect()
}

fn write_panel<W: Write>(
    out: W,
    date_column: &str,
    dates: &[NaiveDate],
    columns: &[String],
    value: impl Fn(usize, usize) -> f64,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![date_column.to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for (t, d) in dates.iter().enumerate() {
        let mut rec = vec![d.format(DATE_FORMAT).to_string()];
        rec.extend((0..columns.len()).map(|j| value(t, j).to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

struct RawPanel {
    dates: Vec<NaiveDate>,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan") || c.eq_ignore_ascii_case("null")
}

fn read_panel<R: Read>(input: R, date_column: &str) -> Result<RawPanel> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let date_idx = headers
        .iter()
        .position(|h| h.trim() == date_column)
        .ok_or_else(|| Error::InvalidInput(format!("no date column '{date_column}' in header")))?;
    let value_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != date_idx).collect();
    let columns: Vec<String> = value_idx.iter().map(|&i| headers[i].trim().to_string()).collect();

    let mut dates = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let raw_date = rec.get(date_idx).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|e| Error::Cell {
            row: line,
            column: date_column.to_string(),
            message: format!("unparsable date '{raw_date}': {e}"),
        })?;
        let mut row = Vec::with_capacity(value_idx.len());
        let mut missing = false;
        for (c, &i) in value_idx.iter().enumerate() {
            let cell = rec.get(i).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Cell {
                row: line,
                column: columns[c].clone(),
                message: format!("not a number: '{cell}'"),
            })?;
            row.push(v);
        }
        if missing {
            dropped += 1;
            continue;
        }
        dates.push(date);
        rows.push(row);
    }
    Ok(RawPanel {
        dates,
        columns,
        rows,
        dropped,
    })
}

/// Reads a price CSV. Rows with any missing cell are dropped and counted.
pub fn read_prices<R: Read>(input: R, date_column: &str) -> Result<PriceFrame> {
    let raw = read_panel(input, date_column)?;
    for (t, row) in raw.rows.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Cell {
                    row: t + 1,
                    column: raw.columns[j].clone(),
                    message: format!("non-positive price {p} on {}", raw.dates[t]),
                });
            }
        }
    }
    let prices = DMatrix::from_fn(raw.rows.len(), raw.columns.len(), |t, j| raw.rows[t][j]);
    let mut frame = PriceFrame::new(raw.dates, raw.columns, prices)?;
    frame.dropped_rows = raw.dropped;
    Ok(frame)
}

pub fn load_prices(path: impl AsRef<Path>, date_column: &str) -> Result<PriceFrame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_prices(file, date_column)
}

pub fn read_factors<R: Read>(input: R, date_column: &str) -> Result<FactorPanel> {
    let raw = read_panel(input, date_column)?;
    let columns = raw
        .columns
        .iter()
        .map(|c| c.parse())
        .collect::<Result<Vec<FactorKind>>>()?;
    let values = (0..columns.len())
        .map(|j| raw.rows.iter().map(|r| r[j]).collect())
        .collect();
    FactorPanel::new(raw.dates, columns, values)
}

pub fn load_factors(path: impl AsRef<Path>, date_column: &str) -> Result<FactorPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_factors(file, date_column)
}

/// Simple: `P_t / P_{t−1} − 1`. Log: `ln(P_t / P_{t−1})`.
pub fn compute_returns(p: &PriceFrame, kind: ReturnKind) -> ReturnFrame {
    let prices = p.prices();
    let rows = p.len() - 1;
    let returns = DMatrix::from_fn(rows, p.n_assets(), |t, j| {
        let ratio = prices[(t + 1, j)] / prices[(t, j)];
        match kind {
            ReturnKind::Simple => ratio - 1.0,
            ReturnKind::Log => ratio.ln(),
        }
    });
    ReturnFrame {
        dates: p.dates()[1..].to_vec(),
        assets: p.assets().to_vec(),
        returns,
        kind,
    }
}

/// Restricts both panels to their common dates.
pub fn align(r: &ReturnFrame, f: &FactorPanel) -> Result<(ReturnFrame, FactorPanel)> {
    let (mut i, mut j) = (0, 0);
    let (mut keep_r, mut keep_f) = (Vec::new(), Vec::new());
    while i < r.dates.len() && j < f.dates.len() {
        match r.dates[i].cmp(&f.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                keep_r.push(i);
                keep_f.push(j);
                i += 1;
                j += 1;
            }
        }
    }
    if keep_r.is_empty() {
        return Err(Error::InvalidInput(
            "return and factor panels share no dates".into(),
        ));
    }
    let returns = DMatrix::from_fn(keep_r.len(), r.n_assets(), |t, c| r.returns[(keep_r[t], c)]);
    let aligned_r = ReturnFrame {
        dates: keep_r.iter().map(|&t| r.dates[t]).collect(),
        assets: r.assets.clone(),
        returns,
        kind: r.kind,
    };
    Ok((aligned_r, f.select_rows(&keep_f)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssetStats {
    pub asset: String,
    pub mean: f64,
    pub sd: f64,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

/// Per-asset moments plus the correlation matrix. Correlations involving a
/// zero-variance asset are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub assets: Vec<AssetStats>,
    pub correlation: Vec<Vec<Option<f64>>>,
}

impl SummaryStats {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["asset", "mean", "sd", "skewness", "excess_kurtosis"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.assets.iter().map(|a| format!("corr_{}", a.asset)));
        w.write_record(&header)?;
        for (i, a) in self.assets.iter().enumerate() {
            let mut rec = vec![
                a.asset.clone(),
                a.mean.to_string(),
                a.sd.to_string(),
                fmt_opt(a.skewness),
                fmt_opt(a.excess_kurtosis),
            ];
            rec.extend(self.correlation[i].iter().map(|c| fmt_opt(*c)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn summary_stats(r: &ReturnFrame) -> Result<SummaryStats> {
    if r.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "summary statistics need at least 4 returns, got {}",
            r.len()
        )));
    }
    let columns: Vec<Vec<f64>> = (0..r.n_assets()).map(|j| r.asset(j)).collect();
    let assets = columns
        .iter()
        .zip(r.assets())
        .map(|(xs, name)| {
            let (skew, kurt) = stats::skew_kurtosis(xs);
            AssetStats {
                asset: name.clone(),
                mean: stats::mean(xs),
                sd: stats::std_dev(xs),
                skewness: skew.is_finite().then_some(skew),
                excess_kurtosis: kurt.is_finite().then_some(kurt),
            }
        })
        .collect::<Vec<_>>();
    let n = columns.len();
    let mut correlation = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let (si, sj) = (assets[i].sd, assets[j].sd);
            if !(si > 0.0 && sj > 0.0) {
                continue;
            }
            let c = if i == j {
                1.0
            } else {
                (stats::covariance(&columns[i], &columns[j]) / (si * sj)).clamp(-1.0, 1.0)
            };
            correlation[i][j] = Some(c);
            correlation[j][i] = Some(c);
        }
    }
    Ok(SummaryStats { assets, correlation })
}
