//! Command drivers: load a run, forecast one date, backtest a range,
//! recompute the summary, and run the trial-consistency study.
//!
//! Output layout under the configured output directory:
//!
//! ```text
//! forecasts.csv                      language-model predictions
//! baselines.csv                      walk-forward baseline predictions
//! manifest.json                      run parameters, seed, file list
//! analysis/eval_summary.csv          model x look-back metrics
//! analysis/similarity_stats.csv      trial similarity
//! analysis/trial_correlation.csv     trial score correlation
//! runs/<date>/l<l>/record.json       aggregated forecast
//! runs/<date>/l<l>/shots.json        per-trial shot windows
//! runs/<date>/l<l>/scaling.json      bounds and multipliers
//! runs/<date>/l<l>/trial<k>.json     scored trial with raw response
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::consistency::{trial_score_correlation, trial_similarity_stats, ConsistencyError, SimilarityStats, StdKind};
use crate::context::ShotWindow;
use crate::corpus::{load_price_series, load_reports, CorpusError, PriceAccess, PriceSeries, ReportCorpus};
use crate::evaluation::{evaluate_run, walk_forward_forecast, EvalError, EvalSummary, PredictionRow};
use crate::factors::FactorSet;
use crate::gateway::{Gateway, GatewayError, GatewayOptions};
use crate::scoring::{ForecastOutcome, ForecastRecord, Forecaster, ScoredFactor, ScoringError};

/// Pipeline step an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Gateway,
    Forecast,
    Baseline,
    Evaluation,
    Consistency,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Gateway => "gateway",
            Stage::Forecast => "forecast",
            Stage::Baseline => "baseline",
            Stage::Evaluation => "evaluation",
            Stage::Consistency => "consistency",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(#[from] ConfigError),
    #[error("[load] {0}")]
    Load(#[from] CorpusError),
    #[error("[gateway] {0}")]
    Gateway(#[from] GatewayError),
    #[error("[forecast] {0}")]
    Forecast(#[from] ScoringError),
    #[error("[baseline] {model} for {date} (look-back {lookback}): {source}")]
    Baseline {
        model: String,
        date: NaiveDate,
        lookback: u32,
        #[source]
        source: EvalError,
    },
    #[error("[evaluation] {0}")]
    Evaluation(#[from] EvalError),
    #[error("[consistency] {0}")]
    Consistency(#[from] ConsistencyError),
    #[error("[consistency] missing trial artifacts: {0}")]
    MissingTrialArtifacts(String),
    #[error("[output] {path}: {reason}")]
    Output { path: String, reason: String },
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Config(_) => Stage::Config,
            PipelineError::Load(_) => Stage::Load,
            PipelineError::Gateway(_) => Stage::Gateway,
            PipelineError::Forecast(_) => Stage::Forecast,
            PipelineError::Baseline { .. } => Stage::Baseline,
            PipelineError::Evaluation(_) => Stage::Evaluation,
            PipelineError::Consistency(_) | PipelineError::MissingTrialArtifacts(_) => Stage::Consistency,
            PipelineError::Output { .. } => Stage::Output,
        }
    }
}

fn output_err(path: &Path, reason: impl ToString) -> PipelineError {
    PipelineError::Output {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| output_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| output_err(path, e))?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::MissingTrialArtifacts(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| output_err(path, e))
}

/// Loaded data and backends for one run configuration.
pub struct Run {
    pub config: RunConfig,
    pub series: PriceSeries,
    pub corpus: ReportCorpus,
    extractor: Gateway,
    scorer: Gateway,
}

impl Run {
    pub fn open(config: RunConfig, offline: bool) -> Result<Self, PipelineError> {
        config.validate()?;
        let series = load_price_series(&config.prices)?;
        config.validate_against(&series)?;
        let corpus = load_reports(&config.reports)?.align_to_trading_days(&series, config.non_trading_reports);
        let opts = GatewayOptions {
            offline,
            seed: config.seed,
        };
        let cache = config.cache_dir.as_deref();
        let extractor = Gateway::new(config.extractor.clone(), cache, opts)?;
        let scorer = Gateway::new(config.scorer.clone(), cache, opts)?;
        Ok(Self {
            config,
            series,
            corpus,
            extractor,
            scorer,
        })
    }

    pub fn forecaster(&self) -> Result<Forecaster<'_>, PipelineError> {
        let settings = self.config.forecast_settings()?;
        Ok(Forecaster::new(
            &self.series,
            &self.corpus,
            &self.extractor,
            &self.scorer,
            settings,
        )?)
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }
}

/// What a trial file holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialArtifact {
    pub date: NaiveDate,
    pub lookback: u32,
    pub trial_index: u32,
    pub factors: FactorSet,
    pub scored: Vec<ScoredFactor>,
    pub total: i64,
    pub request_digest: String,
    pub response: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShotsArtifact {
    trial_index: u32,
    window: ShotWindow,
}

pub fn run_dir(output_dir: &Path, date: NaiveDate, lookback: u32) -> PathBuf {
    output_dir
        .join("runs")
        .join(date.to_string())
        .join(format!("l{lookback}"))
}

pub fn write_audit_bundle(output_dir: &Path, outcome: &ForecastOutcome) -> Result<(), PipelineError> {
    let r = &outcome.record;
    let dir = run_dir(output_dir, r.date, r.lookback);
    write_json(&dir.join("record.json"), r)?;
    write_json(&dir.join("scaling.json"), &outcome.scaling)?;
    let shots: Vec<ShotsArtifact> = outcome
        .trials
        .iter()
        .map(|t| ShotsArtifact {
            trial_index: t.result.trial_index,
            window: t.window.clone(),
        })
        .collect();
    write_json(&dir.join("shots.json"), &shots)?;
    for t in &outcome.trials {
        let artifact = TrialArtifact {
            date: r.date,
            lookback: r.lookback,
            trial_index: t.result.trial_index,
            factors: t.result.factors.clone(),
            scored: t.result.scored.clone(),
            total: t.result.total,
            request_digest: t.request_digest.clone(),
            response: t.response.clone(),
        };
        write_json(&dir.join(format!("trial{}.json", t.result.trial_index)), &artifact)?;
    }
    Ok(())
}

/// Forecast one date and write its audit bundle.
pub fn run_forecast(run: &Run, date: NaiveDate, lookback: u32) -> Result<ForecastOutcome, PipelineError> {
    let outcome = run.forecaster()?.forecast(date, lookback)?;
    write_audit_bundle(run.output_dir(), &outcome)?;
    Ok(outcome)
}

/// Human-readable summary printed by the `forecast` command.
pub fn render_forecast(outcome: &ForecastOutcome) -> String {
    let r = &outcome.record;
    let rep = outcome.representative_trial();
    let totals: Vec<String> = r.trial_totals.iter().map(i64::to_string).collect();
    let mut out = format!(
        "date: {}\nlook-back: {}\ntrial totals: {}\nmedian total: {}\nmultiplier: {:.6}\nprediction: {:.6}\n",
        r.date,
        r.lookback,
        totals.join(" "),
        r.median_total,
        r.multiplier,
        r.prediction
    );
    match r.actual {
        Some(a) => out.push_str(&format!("actual: {a}\n")),
        None => out.push_str("actual: n/a\n"),
    }
    out.push_str(&format!(
        "\nscores from trial {} (total {}):\n",
        rep.result.trial_index, rep.result.total
    ));
    for (factor, s) in rep.result.factors.factors().iter().zip(&rep.result.scored) {
        out.push_str(&format!(
            "{:>2}. [{:+}] {}\n    {}\n",
            s.index, s.score, factor, s.rationale
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ForecastRow {
    date: NaiveDate,
    lookback: u32,
    trial_totals: String,
    median_total: f64,
    multiplier: f64,
    prediction: f64,
    actual: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BaselineRow {
    model: String,
    date: NaiveDate,
    lookback: u32,
    prediction: f64,
    actual: i64,
}

fn to_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| output_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| output_err(path, e))?;
    String::from_utf8(bytes).map_err(|e| output_err(path, e))
}

fn from_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| output_err(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| output_err(path, e))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    seed: u64,
    k: u32,
    temperature: f64,
    l_grid: Vec<u32>,
    first_date: NaiveDate,
    last_date: NaiveDate,
    n_dates: usize,
    extractor: String,
    scorer: String,
    m_dist: f64,
    scaling: &'a crate::scaling::ScalingParams,
    truncation: crate::context::TruncationMode,
    tie_rule: crate::evaluation::TieRule,
    models: Vec<String>,
    files: Vec<&'static str>,
}

pub struct BacktestReport {
    pub records: Vec<ForecastRecord>,
    pub baselines: Vec<PredictionRow>,
    pub summary: EvalSummary,
}

fn baseline_rows(run: &Run, date: NaiveDate, lookback: u32, actual: i64) -> Result<Vec<PredictionRow>, PipelineError> {
    let pos = run.series.position_of(date).ok_or(CorpusError::UnknownDate(date))?;
    let known = run.series.view_until(pos);
    run.config
        .baselines
        .iter()
        .map(|kind| {
            let prediction =
                walk_forward_forecast(&known, pos, lookback, run.config.truncation, *kind).map_err(|source| {
                    PipelineError::Baseline {
                        model: kind.name(),
                        date,
                        lookback,
                        source,
                    }
                })?;
            Ok(PredictionRow {
                model: kind.name(),
                date,
                lookback,
                prediction,
                actual,
            })
        })
        .collect()
}

/// Walk forward over the configured dates and look-backs.
///
/// Jobs run in parallel; every job that succeeds has its audit bundle
/// written even when another fails, and the response cache keeps all
/// completed calls, so a rerun resumes where this one stopped.
pub fn run_backtest(run: &Run) -> Result<BacktestReport, PipelineError> {
    let cfg = &run.config;
    let dates = cfg.backtest_dates(&run.series)?;
    let l_grid = cfg.sorted_l_grid();
    let forecaster = run.forecaster()?;
    let jobs: Vec<(NaiveDate, u32)> = dates
        .iter()
        .flat_map(|d| l_grid.iter().map(move |l| (*d, *l)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.scorer.parallelism.max(1))
        .build()
        .map_err(|e| output_err(run.output_dir(), e))?;
    let results: Vec<Result<(ForecastOutcome, Vec<PredictionRow>), PipelineError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, l)| {
                let outcome = forecaster.forecast(d, l)?;
                let actual = outcome.record.actual.expect("backtest dates always have a next close");
                let baselines = baseline_rows(run, d, l, actual)?;
                Ok((outcome, baselines))
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut baselines = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok((outcome, rows)) => {
                write_audit_bundle(run.output_dir(), &outcome)?;
                records.push(outcome.record);
                baselines.extend(rows);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    let mut rows: Vec<PredictionRow> = records
        .iter()
        .map(|r| PredictionRow {
            model: cfg.model_label.clone(),
            date: r.date,
            lookback: r.lookback,
            prediction: r.prediction,
            actual: r.actual.expect("checked above"),
        })
        .collect();
    rows.extend(baselines.iter().cloned());
    let summary = evaluate_run(&rows, &cfg.model_names(), &l_grid, cfg.tie_rule)?;

    let out = run.output_dir();
    let forecast_rows: Vec<ForecastRow> = records
        .iter()
        .map(|r| ForecastRow {
            date: r.date,
            lookback: r.lookback,
            trial_totals: r.trial_totals.iter().map(i64::to_string).collect::<Vec<_>>().join(";"),
            median_total: r.median_total,
            multiplier: r.multiplier,
            prediction: r.prediction,
            actual: r.actual.expect("checked above"),
        })
        .collect();
    let path = out.join("forecasts.csv");
    write_file(&path, &to_csv(&forecast_rows, &path)?)?;
    let baseline_csv: Vec<BaselineRow> = baselines
        .iter()
        .map(|b| BaselineRow {
            model: b.model.clone(),
            date: b.date,
            lookback: b.lookback,
            prediction: b.prediction,
            actual: b.actual,
        })
        .collect();
    let path = out.join("baselines.csv");
    write_file(&path, &to_csv(&baseline_csv, &path)?)?;
    write_file(&out.join("analysis").join("eval_summary.csv"), &summary.to_csv())?;
    let manifest = Manifest {
        seed: cfg.seed,
        k: cfg.k,
        temperature: cfg.temperature,
        l_grid: l_grid.clone(),
        first_date: dates[0],
        last_date: *dates.last().expect("nonempty"),
        n_dates: dates.len(),
        extractor: cfg.extractor.backend_id(),
        scorer: cfg.scorer.backend_id(),
        m_dist: forecaster.m_dist(),
        scaling: &cfg.scaling,
        truncation: cfg.truncation,
        tie_rule: cfg.tie_rule,
        models: cfg.model_names(),
        files: vec!["forecasts.csv", "baselines.csv", "analysis/eval_summary.csv", "runs/"],
    };
    write_json(&out.join("manifest.json"), &manifest)?;

    Ok(BacktestReport {
        records,
        baselines,
        summary,
    })
}

/// Recompute `analysis/eval_summary.csv` from the stored prediction files.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalSummary, PipelineError> {
    let out = &cfg.output_dir;
    let forecasts: Vec<ForecastRow> = from_csv(&out.join("forecasts.csv"))?;
    let baselines: Vec<BaselineRow> = from_csv(&out.join("baselines.csv"))?;
    let mut rows: Vec<PredictionRow> = forecasts
        .into_iter()
        .map(|f| PredictionRow {
            model: cfg.model_label.clone(),
            date: f.date,
            lookback: f.lookback,
            prediction: f.prediction,
            actual: f.actual,
        })
        .collect();
    rows.extend(baselines.into_iter().map(|b| PredictionRow {
        model: b.model,
        date: b.date,
        lookback: b.lookback,
        prediction: b.prediction,
        actual: b.actual,
    }));
    let summary = evaluate_run(&rows, &cfg.model_names(), &cfg.sorted_l_grid(), cfg.tie_rule)?;
    write_file(&out.join("analysis").join("eval_summary.csv"), &summary.to_csv())?;
    Ok(summary)
}

pub struct ConsistencyReport {
    pub lookback: u32,
    pub similarity: SimilarityStats,
    pub correlation: crate::consistency::CorrelationMatrix,
}

/// Trial similarity and score correlation over a finished backtest.
///
/// Factor sets do not depend on the look-back, so the smallest look-back in
/// the grid supplies both the factor text and the total-score series.
pub fn run_consistency(cfg: &RunConfig) -> Result<ConsistencyReport, PipelineError> {
    let out = &cfg.output_dir;
    let forecasts_path = out.join("forecasts.csv");
    if !forecasts_path.exists() {
        return Err(PipelineError::MissingTrialArtifacts(format!(
            "{} not found; run `backtest` first",
            forecasts_path.display()
        )));
    }
    let lookback = cfg.sorted_l_grid()[0];
    let forecasts: Vec<ForecastRow> = from_csv(&forecasts_path)?;
    let dates: Vec<NaiveDate> = forecasts
        .iter()
        .filter(|f| f.lookback == lookback)
        .map(|f| f.date)
        .collect();
    if dates.is_empty() {
        return Err(PipelineError::MissingTrialArtifacts(format!(
            "no forecasts at look-back {lookback}"
        )));
    }

    let mut per_date: Vec<Vec<FactorSet>> = Vec::new();
    let mut totals: Vec<Vec<f64>> = vec![Vec::new(); cfg.k as usize];
    for d in &dates {
        let dir = run_dir(out, *d, lookback);
        let mut sets = Vec::new();
        for trial in 0..cfg.k {
            let artifact: TrialArtifact = read_json(&dir.join(format!("trial{trial}.json")))?;
            totals[trial as usize].push(artifact.total as f64);
            sets.push(artifact.factors);
        }
        per_date.push(sets);
    }

    let similarity = trial_similarity_stats(&per_date, StdKind::Population)?;
    let correlation = trial_score_correlation(&totals)?;
    let analysis = out.join("analysis");
    write_file(
        &analysis.join("similarity_stats.csv"),
        &SimilarityStats::to_csv(std::slice::from_ref(&similarity)),
    )?;
    write_file(&analysis.join("trial_correlation.csv"), &correlation.to_csv())?;
    Ok(ConsistencyReport {
        lookback,
        similarity,
        correlation,
    })
}
