//! Declarative run configuration, loaded from JSON.
//!
//! Relative paths are resolved against the directory holding the config
//! file, so a config and its data can move together.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::TruncationMode;
use crate::corpus::{NonTradingReports, PriceSeries, DEFAULT_TOP_REPORTS};
use crate::evaluation::{BaselineKind, TieRule};
use crate::factors::{ExtractionOptions, DEFAULT_EXTRACTION_TEMPLATE};
use crate::gateway::BackendConfig;
use crate::scaling::ScalingParams;
use crate::scoring::{ForecastSettings, LikertScale, DEFAULT_SCORING_TEMPLATE};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_k() -> u32 {
    5
}

fn default_temperature() -> f64 {
    0.2
}

fn default_l_grid() -> Vec<u32> {
    vec![0]
}

fn default_true() -> bool {
    true
}

fn default_top_reports() -> usize {
    DEFAULT_TOP_REPORTS
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_model_label() -> String {
    "llm".into()
}

fn default_baselines() -> Vec<BaselineKind> {
    vec![BaselineKind::Naive, BaselineKind::Drift, BaselineKind::Ar { order: 1 }]
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `date,close` CSV.
    pub prices: PathBuf,
    /// JSONL file or directory of JSONL files.
    pub reports: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub extractor: BackendConfig,
    pub scorer: BackendConfig,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_l_grid")]
    pub l_grid: Vec<u32>,
    #[serde(default)]
    pub scaling: ScalingParams,
    /// First and last question dates of a backtest, inclusive.
    #[serde(default)]
    pub start_date: Option<NaiveDate>,
    #[serde(default)]
    pub end_date: Option<NaiveDate>,
    #[serde(default = "default_true")]
    pub strict_mode: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_top_reports")]
    pub top_reports: usize,
    #[serde(default)]
    pub truncation: TruncationMode,
    #[serde(default)]
    pub tie_rule: TieRule,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<BaselineKind>,
    #[serde(default)]
    pub non_trading_reports: NonTradingReports,
    #[serde(default)]
    pub likert_scale: Option<LikertScale>,
    #[serde(default)]
    pub extraction_template: Option<PathBuf>,
    #[serde(default)]
    pub scoring_template: Option<PathBuf>,
    #[serde(default = "default_retries")]
    pub extraction_retries: u32,
    #[serde(default = "default_retries")]
    pub score_retries: u32,
    /// Row label of the language-model forecasts in the summary.
    #[serde(default = "default_model_label")]
    pub model_label: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.prices);
        fix(&mut self.reports);
        fix(&mut self.output_dir);
        for p in [
            &mut self.cache_dir,
            &mut self.extraction_template,
            &mut self.scoring_template,
            &mut self.extractor.fixture_path,
            &mut self.scorer.fixture_path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Checks that need no data on disk.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.l_grid.is_empty() {
            return bad("l_grid must not be empty".into());
        }
        if !(self.temperature.is_finite() && (0.0..=2.0).contains(&self.temperature)) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.top_reports == 0 {
            return bad("top_reports must be at least 1".into());
        }
        if let (Some(s), Some(e)) = (self.start_date, self.end_date) {
            if s > e {
                return bad(format!("start_date {s} is after end_date {e}"));
            }
        }
        if self.model_label.trim().is_empty() || self.model_label.contains(',') {
            return bad("model_label must be non-empty and contain no commas".into());
        }
        let mut names = vec![self.model_label.clone()];
        for b in &self.baselines {
            if let BaselineKind::Ar { order: 0 } = b {
                return bad("ar baseline order must be at least 1".into());
            }
            if names.contains(&b.name()) {
                return bad(format!("model name `{}` used twice", b.name()));
            }
            names.push(b.name());
        }
        self.scaling
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (role, b) in [("extractor", &self.extractor), ("scorer", &self.scorer)] {
            b.validate().map_err(|e| ConfigError::Invalid(format!("{role}: {e}")))?;
        }
        Ok(())
    }

    /// Checks against the loaded price series.
    pub fn validate_against(&self, series: &PriceSeries) -> Result<(), ConfigError> {
        let (first, last) = (series.first_date(), series.last_date());
        for (name, d) in [("start_date", self.start_date), ("end_date", self.end_date)] {
            if let Some(d) = d {
                if d < first || d > last {
                    return Err(ConfigError::Invalid(format!(
                        "{name} {d} outside the price series ({first}..{last})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Trading days in the configured range that have a next-day close to
    /// score against.
    pub fn backtest_dates(&self, series: &PriceSeries) -> Result<Vec<NaiveDate>, ConfigError> {
        self.validate_against(series)?;
        let dates: Vec<NaiveDate> = series.dates().collect();
        let last_scorable = dates[..dates.len().saturating_sub(1)].last().copied();
        let start = self.start_date.unwrap_or(series.first_date());
        let end = match (self.end_date, last_scorable) {
            (Some(e), Some(ls)) => e.min(ls),
            (None, Some(ls)) => ls,
            (_, None) => return Err(ConfigError::Invalid("price series has a single day".into())),
        };
        let picked: Vec<NaiveDate> = dates.into_iter().filter(|d| *d >= start && *d <= end).collect();
        if picked.is_empty() {
            return Err(ConfigError::Invalid(format!(
                "no scorable trading days in {start}..{end}"
            )));
        }
        Ok(picked)
    }

    pub fn sorted_l_grid(&self) -> Vec<u32> {
        let mut l = self.l_grid.clone();
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn forecast_settings(&self) -> Result<ForecastSettings, ConfigError> {
        let read = |p: &Option<PathBuf>, default: &str| -> Result<String, ConfigError> {
            match p {
                Some(p) => fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                }),
                None => Ok(default.to_string()),
            }
        };
        let extraction = ExtractionOptions {
            strict_mode: self.strict_mode,
            retries: self.extraction_retries,
            temperature: self.temperature,
            template: read(&self.extraction_template, DEFAULT_EXTRACTION_TEMPLATE)?,
            ..ExtractionOptions::default()
        };
        Ok(ForecastSettings {
            k: self.k,
            temperature: self.temperature,
            params: self.scaling.clone(),
            g_mode: self.truncation,
            top_n: self.top_reports,
            scale: self.likert_scale.clone().unwrap_or_default(),
            scoring_template: read(&self.scoring_template, DEFAULT_SCORING_TEMPLATE)?,
            score_retries: self.score_retries,
            extraction,
            ..ForecastSettings::default()
        })
    }

    /// Model names in summary order: the language model, then baselines.
    pub fn model_names(&self) -> Vec<String> {
        std::iter::once(self.model_label.clone())
            .chain(self.baselines.iter().map(BaselineKind::name))
            .collect()
    }
}
