//! Run configuration: defaults, then a flat `key = value` file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::Serialize;

use portfolio_analytics::forecasting::Selection;
use portfolio_analytics::market_data::DATE_FORMAT;
use portfolio_analytics::moments::ModelTag;

pub const KEYS: [&str; 18] = [
    "prices",
    "factors",
    "models",
    "window",
    "alpha",
    "bootstrap_b",
    "seed",
    "out",
    "grid_step",
    "position",
    "steps",
    "cover_samples",
    "arma_p",
    "arma_q",
    "train_end",
    "selection",
    "selection_alpha",
    "date_column",
];

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub models: Vec<ModelTag>,
    pub window: usize,
    pub alpha: f64,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub grid_step: f64,
    pub position: f64,
    pub steps: usize,
    pub cover_samples: usize,
    pub arma_p: usize,
    pub arma_q: usize,
    /// Last training date for forecasts; a 7/8 split when absent.
    pub train_end: Option<NaiveDate>,
    pub selection: String,
    pub selection_alpha: f64,
    pub date_column: String,
}

impl RunConfig {
    pub fn selection(&self) -> Selection {
        match self.selection.as_str() {
            "aic" => Selection::Aic,
            _ => Selection::PValue(self.selection_alpha),
        }
    }
}

fn defaults() -> BTreeMap<&'static str, String> {
    [
        ("models", "MM,CCM,SIM,MFM"),
        ("window", "250"),
        ("alpha", "0.05"),
        ("bootstrap_b", "500"),
        ("seed", "20110103"),
        ("out", "out"),
        ("grid_step", "0.01"),
        ("position", "1"),
        ("steps", "1259"),
        ("cover_samples", "10000"),
        ("arma_p", "1"),
        ("arma_q", "1"),
        ("selection", "pvalue"),
        ("selection_alpha", "0.05"),
        ("date_column", "date"),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.to_string()))
    .collect()
}

fn canonical_key(raw: &str) -> Option<&'static str> {
    let k = raw.trim().replace('-', "_");
    KEYS.iter().copied().find(|key| *key == k)
}

/// Parses `key = value` lines; `#` starts a comment. Every malformed line
/// and unknown key is reported.
pub fn parse_config_file(text: &str, errors: &mut Vec<String>) -> BTreeMap<&'static str, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!("config line {}: expected key = value", i + 1));
            continue;
        };
        match canonical_key(k) {
            Some(key) => {
                out.insert(key, v.trim().to_string());
            }
            None => errors.push(format!("config line {}: unknown key {:?}", i + 1, k.trim())),
        }
    }
    out
}

/// Merges defaults, the optional config file and flag values, then checks
/// every field, failing with the full list of problems.
pub fn resolve(
    config_file: Option<&Path>,
    flags: &BTreeMap<&'static str, String>,
    needs_factors_for: &[ModelTag],
) -> Result<RunConfig> {
    let mut errors = Vec::new();
    let mut values = defaults();
    if let Some(path) = config_file {
        match std::fs::read_to_string(path) {
            Ok(text) => values.extend(parse_config_file(&text, &mut errors)),
            Err(e) => errors.push(format!("config file {}: {e}", path.display())),
        }
    }
    values.extend(flags.iter().map(|(k, v)| (*k, v.clone())));

    fn num<T: std::str::FromStr>(values: &BTreeMap<&str, String>, key: &str, errors: &mut Vec<String>) -> Option<T> {
        let raw = values.get(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                errors.push(format!("{key}: cannot parse {raw:?}"));
                None
            }
        }
    }
    let path = |key: &str, errors: &mut Vec<String>| -> Option<PathBuf> {
        let p = PathBuf::from(values.get(key)?);
        if !p.is_file() {
            errors.push(format!("{key}: file {} does not exist", p.display()));
        }
        Some(p)
    };

    let prices = path("prices", &mut errors);
    let factors = path("factors", &mut errors);
    let mut models = Vec::new();
    for raw in values["models"].split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match raw.to_ascii_uppercase().parse::<ModelTag>() {
            Ok(m) if !models.contains(&m) => models.push(m),
            Ok(_) => errors.push(format!("models: {raw} listed twice")),
            Err(_) => errors.push(format!("models: unknown model {raw:?} (expected MM, CCM, SIM, MFM)")),
        }
    }
    if values["models"].trim().is_empty() {
        errors.push("models: at least one model required".into());
    }
    let window = num::<usize>(&values, "window", &mut errors);
    let alpha = num::<f64>(&values, "alpha", &mut errors);
    let bootstrap_b = num::<usize>(&values, "bootstrap_b", &mut errors);
    let seed = num::<u64>(&values, "seed", &mut errors);
    let grid_step = num::<f64>(&values, "grid_step", &mut errors);
    let position = num::<f64>(&values, "position", &mut errors);
    let steps = num::<usize>(&values, "steps", &mut errors);
    let cover_samples = num::<usize>(&values, "cover_samples", &mut errors);
    let arma_p = num::<usize>(&values, "arma_p", &mut errors);
    let arma_q = num::<usize>(&values, "arma_q", &mut errors);
    let selection_alpha = num::<f64>(&values, "selection_alpha", &mut errors);
    let train_end = values.get("train_end").and_then(|raw| {
        NaiveDate::parse_from_str(raw, DATE_FORMAT)
            .map_err(|_| errors.push(format!("train_end: {raw:?} is not a YYYY-MM-DD date")))
            .ok()
    });
    let selection = values["selection"].to_ascii_lowercase();
    if selection != "pvalue" && selection != "aic" {
        errors.push(format!("selection: expected pvalue or aic, got {selection:?}"));
    }

    if window.is_some_and(|w| w < 3) {
        errors.push("window: must be at least 3".into());
    }
    if alpha.is_some_and(|a| !(a > 0.0 && a <= 0.5)) {
        errors.push("alpha: must lie in (0, 0.5]".into());
    }
    if bootstrap_b.is_some_and(|b| b < 100) {
        errors.push("bootstrap_b: must be at least 100".into());
    }
    if grid_step.is_some_and(|s| !(s > 0.0 && s <= 1.0)) {
        errors.push("grid_step: must lie in (0, 1]".into());
    }
    if position.is_some_and(|s| !(s > 0.0) || !s.is_finite()) {
        errors.push("position: must be positive".into());
    }
    if steps.is_some_and(|s| s < 10) {
        errors.push("steps: must be at least 10".into());
    }
    if cover_samples.is_some_and(|s| s < 100) {
        errors.push("cover_samples: must be at least 100".into());
    }
    if selection_alpha.is_some_and(|a| !(a > 0.0 && a < 1.0)) {
        errors.push("selection_alpha: must lie in (0, 1)".into());
    }
    if prices.is_some() && factors.is_none() {
        for m in models.iter().filter(|m| needs_factors_for.contains(m)) {
            errors.push(format!("models: {m} needs a factor panel; pass --factors"));
        }
    }
    if factors.is_some() && prices.is_none() {
        errors.push("factors: given without prices; the bundled fixture has its own factors".into());
    }

    if !errors.is_empty() {
        bail!("invalid configuration:\n  - {}", errors.join("\n  - "));
    }
    Ok(RunConfig {
        prices,
        factors,
        models,
        window: window.unwrap(),
        alpha: alpha.unwrap(),
        bootstrap_b: bootstrap_b.unwrap(),
        seed: seed.unwrap(),
        out: PathBuf::from(&values["out"]),
        grid_step: grid_step.unwrap(),
        position: position.unwrap(),
        steps: steps.unwrap(),
        cover_samples: cover_samples.unwrap(),
        arma_p: arma_p.unwrap(),
        arma_q: arma_q.unwrap(),
        train_end,
        selection,
        selection_alpha: selection_alpha.unwrap(),
        date_column: values["date_column"].clone(),
    })
}

/// Creates the output directory.
pub fn prepare_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))
}
