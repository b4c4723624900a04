use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::context::{build_shot_window, price_delta_at, PriceDelta, ShotWindow, TruncationMode, N_SHOTS};
use crate::corpus::{top_reports, CorpusError, PriceAccess, PriceSeries, PriceView, ReportCorpus};
use crate::factors::{combine_reports, extract_factors, ExtractionOptions, FactorError, FactorSet, N_FACTORS};
use crate::gateway::{Gateway, GenRequest};
use crate::scaling::{
    dist_multiplier, factor_multiplier, rescale_score, rolling_bounds, scale_shots, RollingBounds, ScaledShotValue,
    ScalingError, ScalingParams,
};

use super::{
    median_total, parse_scores, render_prompt, total_score, ForecastRecord, LikertScale, ScoringError, ShotExample,
    TrialResult, DEFAULT_SCORING_TEMPLATE, SCORING_SYSTEM_TEXT,
};

const SCORE_RETRY_NOTE: &str = "Your previous answer did not follow the required format. Reply with exactly \
10 lines of the form `Factor <number>: score=<integer> | rationale: <one sentence>`.";

#[derive(Debug, Clone)]
pub struct ForecastSettings {
    /// Trials per date.
    pub k: u32,
    pub temperature: f64,
    pub params: ScalingParams,
    pub g_mode: TruncationMode,
    /// Reports per date fed to factor extraction.
    pub top_n: usize,
    pub scale: LikertScale,
    pub scoring_template: String,
    pub scoring_max_tokens: u32,
    /// Extra scoring attempts after an unparseable answer.
    pub score_retries: u32,
    pub extraction: ExtractionOptions,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            k: 5,
            temperature: 0.2,
            params: ScalingParams::default(),
            g_mode: TruncationMode::TowardZero,
            top_n: crate::corpus::DEFAULT_TOP_REPORTS,
            scale: LikertScale::default(),
            scoring_template: DEFAULT_SCORING_TEMPLATE.to_string(),
            scoring_max_tokens: 2048,
            score_retries: 2,
            extraction: ExtractionOptions::default(),
        }
    }
}

/// Everything one trial produced, kept for the audit trail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub window: ShotWindow,
    pub scaled: Vec<ScaledShotValue>,
    pub request_digest: String,
    pub response: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShotScaling {
    pub bounds: RollingBounds,
    pub value: ScaledShotValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingAudit {
    pub question_date: NaiveDate,
    pub lookback: u32,
    pub m_dist: f64,
    pub shots: Vec<ShotScaling>,
    /// Window used for the question-date multiplier; it ends at the newest
    /// delta observable on the question date.
    pub question_bounds: RollingBounds,
    pub question_multiplier: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastOutcome {
    pub record: ForecastRecord,
    pub trials: Vec<TrialOutcome>,
    pub scaling: ScalingAudit,
}

impl ForecastOutcome {
    /// The trial whose total equals the median, or the closest one.
    pub fn representative_trial(&self) -> &TrialOutcome {
        let m = self.record.median_total;
        self.trials
            .iter()
            .min_by(|a, b| {
                let da = (a.result.total as f64 - m).abs();
                let db = (b.result.total as f64 - m).abs();
                da.total_cmp(&db)
            })
            .expect("a forecast has at least one trial")
    }
}

/// Runs the scoring pipeline for single dates against loaded data.
pub struct Forecaster<'a> {
    series: &'a PriceSeries,
    corpus: &'a ReportCorpus,
    extractor: &'a Gateway,
    scorer: &'a Gateway,
    settings: ForecastSettings,
    m_dist: f64,
    memo: Mutex<HashMap<(NaiveDate, u32), FactorSet>>,
}

impl<'a> Forecaster<'a> {
    pub fn new(
        series: &'a PriceSeries,
        corpus: &'a ReportCorpus,
        extractor: &'a Gateway,
        scorer: &'a Gateway,
        settings: ForecastSettings,
    ) -> Result<Self, ScoringError> {
        let m_dist = dist_multiplier(&settings.params)?;
        if settings.params.n_factors as usize != N_FACTORS {
            return Err(ScalingError::InvalidParams(format!("n_factors must be {N_FACTORS}")).into());
        }
        if settings.scale.score_max() != i64::from(settings.params.score_max) {
            return Err(ScoringError::InvalidScale(format!(
                "scale tops out at {} but score_max is {}",
                settings.scale.score_max(),
                settings.params.score_max
            )));
        }
        if settings.k == 0 {
            return Err(ScoringError::NoTrials);
        }
        Ok(Self {
            series,
            corpus,
            extractor,
            scorer,
            settings,
            m_dist,
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn settings(&self) -> &ForecastSettings {
        &self.settings
    }

    pub fn m_dist(&self) -> f64 {
        self.m_dist
    }

    /// Trading days that must precede a question date for look-back `l`.
    pub fn required_history(&self, lookback: u32) -> usize {
        self.settings.params.window + N_SHOTS - 1 + lookback as usize
    }

    fn question_position(&self, d: NaiveDate, lookback: u32) -> Result<usize, ScoringError> {
        let pos = self.series.position_of(d).ok_or(CorpusError::UnknownDate(d))?;
        let required = self.required_history(lookback);
        if pos < required {
            return Err(ScoringError::InsufficientHistory {
                date: d,
                lookback,
                required,
                available: pos,
            });
        }
        Ok(pos)
    }

    /// Factors for `date` in `trial`, extracted on first use.
    pub fn factors_for(&self, date: NaiveDate, trial: u32) -> Result<FactorSet, ScoringError> {
        if let Some(f) = self.memo.lock().expect("memo lock").get(&(date, trial)) {
            return Ok(f.clone());
        }
        let docs = match top_reports(self.corpus, date, self.settings.top_n) {
            Ok(docs) => docs,
            Err(CorpusError::NoReportsForDate(d)) => return Err(ScoringError::MissingFactors(d)),
            Err(e) => return Err(e.into()),
        };
        let combined = combine_reports(&docs)?;
        let set =
            extract_factors(self.extractor, date, &combined, trial, &self.settings.extraction).map_err(
                |e| match e {
                    FactorError::ExtractionFailed { .. } | FactorError::Gateway(_) => ScoringError::TrialFailed {
                        date,
                        trial,
                        reason: e.to_string(),
                    },
                    other => other.into(),
                },
            )?;
        self.memo.lock().expect("memo lock").insert((date, trial), set.clone());
        Ok(set)
    }

    /// Deltas whose prices are all known at the close of position `pos`.
    fn observable_deltas(
        &self,
        view: &PriceView<'_>,
        pos: usize,
        lookback: u32,
    ) -> Result<Vec<PriceDelta>, ScoringError> {
        (lookback as usize..pos)
            .map(|t| price_delta_at(view, t, lookback, self.settings.g_mode).map_err(Into::into))
            .collect()
    }

    fn run_trial(
        &self,
        d: NaiveDate,
        lookback: u32,
        trial: u32,
        view: &PriceView<'_>,
        deltas: &[PriceDelta],
    ) -> Result<TrialOutcome, ScoringError> {
        let pos = view.position_of(d).expect("question date is inside its view");
        let mut by_date = BTreeMap::new();
        for j in 1..=N_SHOTS {
            let date = view.date_at(pos - j).expect("history checked");
            by_date.insert(date, self.factors_for(date, trial)?);
        }
        let question = self.factors_for(d, trial)?;
        let window = build_shot_window(view, &by_date, d, lookback, self.settings.g_mode)?;
        let params = &self.settings.params;
        let scaled = scale_shots(
            &window,
            |t| rolling_bounds(deltas, t, params.window),
            params,
            self.m_dist,
        )?;

        let examples: Vec<ShotExample<'_>> = window
            .shots
            .iter()
            .zip(&scaled)
            .map(|(shot, value)| ShotExample {
                factors: shot.factors.factors(),
                value,
            })
            .collect();
        let prompt = render_prompt(
            &self.settings.scoring_template,
            &examples,
            question.factors(),
            &self.settings.scale,
        )?;

        let mut last_error = String::new();
        for attempt in 0..=self.settings.score_retries {
            let mut system_text = SCORING_SYSTEM_TEXT.to_string();
            if attempt > 0 {
                system_text.push_str(&format!("\n{SCORE_RETRY_NOTE} (attempt {})", attempt + 1));
            }
            let req = GenRequest {
                system_text,
                user_text: prompt.clone(),
                temperature: self.settings.temperature,
                max_tokens: self.settings.scoring_max_tokens,
                trial_index: trial,
            };
            let reply = self.scorer.generate(&req).map_err(|e| ScoringError::TrialFailed {
                date: d,
                trial,
                reason: e.to_string(),
            })?;
            match parse_scores(&reply.text, &self.settings.scale) {
                Ok(scored) => {
                    let total = total_score(&scored);
                    let span = params.score_span() as i64;
                    if total.abs() > span {
                        return Err(ScoringError::TrialFailed {
                            date: d,
                            trial,
                            reason: format!("total {total} outside [-{span}, {span}]"),
                        });
                    }
                    return Ok(TrialOutcome {
                        result: TrialResult {
                            date: d,
                            trial_index: trial,
                            factors: question,
                            scored,
                            total,
                        },
                        window,
                        scaled,
                        request_digest: self.scorer.digest(&req),
                        response: reply.text,
                    });
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(ScoringError::TrialFailed {
            date: d,
            trial,
            reason: format!(
                "unparseable scores after {} attempts: {last_error}",
                self.settings.score_retries + 1
            ),
        })
    }

    /// All `k` trials for question date `d`, ordered by trial index.
    pub fn run_trials(&self, d: NaiveDate, lookback: u32) -> Result<Vec<TrialOutcome>, ScoringError> {
        let pos = self.question_position(d, lookback)?;
        let view = self.series.view_until(pos);
        let deltas = self.observable_deltas(&view, pos, lookback)?;
        (0..self.settings.k)
            .map(|trial| self.run_trial(d, lookback, trial, &view, &deltas))
            .collect()
    }

    pub fn forecast(&self, d: NaiveDate, lookback: u32) -> Result<ForecastOutcome, ScoringError> {
        let pos = self.question_position(d, lookback)?;
        let view = self.series.view_until(pos);
        let deltas = self.observable_deltas(&view, pos, lookback)?;
        let trials = (0..self.settings.k)
            .map(|trial| self.run_trial(d, lookback, trial, &view, &deltas))
            .collect::<Result<Vec<_>, _>>()?;

        let params = &self.settings.params;
        let totals: Vec<i64> = trials.iter().map(|t| t.result.total).collect();
        let median = median_total(&totals)?;
        let last_observed = view.date_at(pos - 1).expect("history checked");
        let question_bounds = rolling_bounds(&deltas, last_observed, params.window)?;
        let multiplier = factor_multiplier(&question_bounds, params, self.m_dist)?;
        let prediction = rescale_score(median, multiplier)?;
        let actual = price_delta_at(self.series, pos, lookback, self.settings.g_mode)
            .ok()
            .map(|x| x.value);

        let shots = trials[0]
            .scaled
            .iter()
            .map(|value| {
                Ok(ShotScaling {
                    bounds: rolling_bounds(&deltas, value.date, params.window)?,
                    value: *value,
                })
            })
            .collect::<Result<Vec<_>, ScalingError>>()?;

        Ok(ForecastOutcome {
            record: ForecastRecord {
                date: d,
                lookback,
                trial_totals: totals,
                median_total: median,
                multiplier,
                prediction,
                actual,
            },
            scaling: ScalingAudit {
                question_date: d,
                lookback,
                m_dist: self.m_dist,
                shots,
                question_bounds,
                question_multiplier: multiplier,
            },
            trials,
        })
    }
}
