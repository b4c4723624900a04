//! Factor scoring: prompt rendering, structured-output parsing, trial
//! aggregation and the end-to-end forecast for one date.

mod forecast;
mod parse;
mod prompt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forecast::{ForecastOutcome, ForecastSettings, Forecaster, TrialOutcome};
pub use parse::{parse_scores, render_scores};
pub use prompt::{render_prompt, ShotExample, DEFAULT_SCORING_TEMPLATE, SCORING_SYSTEM_TEXT};

use crate::context::ContextError;
use crate::corpus::CorpusError;
use crate::factors::{FactorError, FactorSet};
use crate::scaling::ScalingError;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("invalid prompt input: {0}")]
    InvalidPromptInput(String),
    #[error("malformed score line `{line}`: {reason}")]
    MalformedScoreLine { line: String, reason: String },
    #[error("factor {index} score {score} outside [-{max}, {max}]")]
    ScoreOutOfRange { index: usize, score: i64, max: i64 },
    #[error("no score for factor {0}")]
    MissingFactorIndex(usize),
    #[error("factor {0} scored more than once")]
    DuplicateFactorIndex(usize),
    #[error("invalid Likert scale: {0}")]
    InvalidScale(String),
    #[error("no trial totals to aggregate")]
    NoTrials,
    #[error(
        "{date} needs {required} trading days of history before it (look-back {lookback}), only {available} available"
    )]
    InsufficientHistory {
        date: NaiveDate,
        lookback: u32,
        required: usize,
        available: usize,
    },
    #[error("no factors for {0}: no reports on that date")]
    MissingFactors(NaiveDate),
    #[error("trial {trial} for {date} failed: {reason}")]
    TrialFailed {
        date: NaiveDate,
        trial: u32,
        reason: String,
    },
    #[error("context: {0}")]
    Context(#[from] ContextError),
    #[error("scaling: {0}")]
    Scaling(#[from] ScalingError),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("factor extraction: {0}")]
    Factor(#[from] FactorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertLevel {
    pub label: String,
    pub value: i64,
}

/// Ordered labelled levels, symmetric about zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LikertLevel>", into = "Vec<LikertLevel>")]
pub struct LikertScale {
    levels: Vec<LikertLevel>,
}

impl Default for LikertScale {
    fn default() -> Self {
        let levels = [
            ("Moderately Decreases", -2),
            ("Slightly Decreases", -1),
            ("Neutral", 0),
            ("Slightly Increases", 1),
            ("Moderately Increases", 2),
        ]
        .into_iter()
        .map(|(label, value)| LikertLevel {
            label: label.into(),
            value,
        })
        .collect();
        Self { levels }
    }
}

impl TryFrom<Vec<LikertLevel>> for LikertScale {
    type Error = ScoringError;

    fn try_from(levels: Vec<LikertLevel>) -> Result<Self, Self::Error> {
        Self::new(levels)
    }
}

impl From<LikertScale> for Vec<LikertLevel> {
    fn from(s: LikertScale) -> Self {
        s.levels
    }
}

impl LikertScale {
    pub fn new(mut levels: Vec<LikertLevel>) -> Result<Self, ScoringError> {
        let bad = |m: String| Err(ScoringError::InvalidScale(m));
        if levels.is_empty() {
            return bad("no levels".into());
        }
        levels.sort_by_key(|l| l.value);
        for (i, a) in levels.iter().enumerate() {
            if a.label.trim().is_empty() {
                return bad("empty label".into());
            }
            for b in &levels[i + 1..] {
                if a.value == b.value || a.label.eq_ignore_ascii_case(&b.label) {
                    return bad(format!("levels `{}` and `{}` collide", a.label, b.label));
                }
            }
            if !levels.iter().any(|b| b.value == -a.value) {
                return bad(format!("value {} has no mirror {}", a.value, -a.value));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[LikertLevel] {
        &self.levels
    }

    pub fn score_max(&self) -> i64 {
        self.levels.iter().map(|l| l.value.abs()).max().unwrap_or(0)
    }

    pub fn value_of(&self, label: &str) -> Option<i64> {
        let label = label.trim();
        self.levels
            .iter()
            .find(|l| l.label.eq_ignore_ascii_case(label))
            .map(|l| l.value)
    }

    pub fn label_of(&self, value: i64) -> Option<&str> {
        self.levels.iter().find(|l| l.value == value).map(|l| l.label.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredFactor {
    /// 1-based factor number.
    pub index: usize,
    pub score: i64,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub date: NaiveDate,
    pub trial_index: u32,
    pub factors: FactorSet,
    pub scored: Vec<ScoredFactor>,
    pub total: i64,
}

/// One date's aggregated, rescaled prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub lookback: u32,
    pub trial_totals: Vec<i64>,
    pub median_total: f64,
    pub multiplier: f64,
    pub prediction: f64,
    pub actual: Option<i64>,
}

pub fn total_score(scored: &[ScoredFactor]) -> i64 {
    scored.iter().map(|s| s.score).sum()
}

/// Median of the trial totals; an even count averages the middle pair.
pub fn median_total(totals: &[i64]) -> Result<f64, ScoringError> {
    if totals.is_empty() {
        return Err(ScoringError::NoTrials);
    }
    let mut v = totals.to_vec();
    v.sort_unstable();
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    })
}
