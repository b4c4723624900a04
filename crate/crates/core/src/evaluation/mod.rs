//! Directional and magnitude metrics over a backtest, plus the classical
//! baselines the language-model forecasts are compared against.

mod baseline;
mod metrics;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::{
    baseline_forecast, fit_ar, known_target_history, walk_forward_forecast, BaselineKind, BaselineModel, AR_MIN_EXTRA,
};
pub use metrics::{accuracy, accuracy_with, direction, mcc, mcc_with, rmse, TieRule};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("AR order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("series too short: need {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("AR design matrix is singular")]
    SingularDesign,
    #[error("building target history: {0}")]
    History(String),
    #[error("model `{model}` at look-back {lookback} is not aligned with `{reference}`: {detail}")]
    MisalignedDates {
        model: String,
        reference: String,
        lookback: u32,
        detail: String,
    },
    #[error("look-back {0} has no forecasts")]
    EmptyCell(u32),
}

/// One model's prediction for one question date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub model: String,
    pub date: NaiveDate,
    pub lookback: u32,
    pub prediction: f64,
    pub actual: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub model: String,
    pub lookback: u32,
    pub acc: f64,
    pub mcc: f64,
    pub rmse: f64,
    pub n: usize,
}

/// Rows are models in the order given, then look-backs ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub cells: Vec<EvalCell>,
}

impl EvalSummary {
    pub fn get(&self, model: &str, lookback: u32) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.model == model && c.lookback == lookback)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,lookback,acc,mcc,rmse,n\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{}\n",
                c.model, c.lookback, c.acc, c.mcc, c.rmse, c.n
            ));
        }
        out
    }
}

/// Score every model on every look-back in `l_grid`.
///
/// `models` lists model names in output order; the first is the reference
/// whose dates every other model must match exactly. `n` counts all dates;
/// under [`TieRule::DropTies`] ACC and MCC use fewer.
pub fn evaluate_run(
    rows: &[PredictionRow],
    models: &[String],
    l_grid: &[u32],
    tie: TieRule,
) -> Result<EvalSummary, EvalError> {
    let mut grouped: BTreeMap<(&str, u32), BTreeMap<NaiveDate, &PredictionRow>> = BTreeMap::new();
    for r in rows {
        let cell = grouped.entry((r.model.as_str(), r.lookback)).or_default();
        if cell.insert(r.date, r).is_some() {
            return Err(EvalError::MisalignedDates {
                model: r.model.clone(),
                reference: r.model.clone(),
                lookback: r.lookback,
                detail: format!("{} appears twice", r.date),
            });
        }
    }
    let lookbacks: BTreeSet<u32> = l_grid.iter().copied().collect();
    let mut cells = Vec::new();
    let empty = BTreeMap::new();
    for model in models {
        for &l in &lookbacks {
            let reference = &models[0];
            let ref_cell = grouped.get(&(reference.as_str(), l)).unwrap_or(&empty);
            if ref_cell.is_empty() {
                return Err(EvalError::EmptyCell(l));
            }
            let cell = grouped.get(&(model.as_str(), l)).unwrap_or(&empty);
            if let Some(detail) = misalignment(ref_cell, cell) {
                return Err(EvalError::MisalignedDates {
                    model: model.clone(),
                    reference: reference.clone(),
                    lookback: l,
                    detail,
                });
            }
            let preds: Vec<f64> = cell.values().map(|r| r.prediction).collect();
            let actuals: Vec<f64> = cell.values().map(|r| r.actual as f64).collect();
            for (date, r) in cell {
                if r.actual != ref_cell[date].actual {
                    return Err(EvalError::MisalignedDates {
                        model: model.clone(),
                        reference: reference.clone(),
                        lookback: l,
                        detail: format!("actual for {date} differs"),
                    });
                }
            }
            cells.push(EvalCell {
                model: model.clone(),
                lookback: l,
                acc: accuracy_with(&preds, &actuals, tie)?,
                mcc: mcc_with(&preds, &actuals, tie)?,
                rmse: rmse(&preds, &actuals)?,
                n: preds.len(),
            });
        }
    }
    Ok(EvalSummary { cells })
}

fn misalignment<T>(reference: &BTreeMap<NaiveDate, T>, other: &BTreeMap<NaiveDate, T>) -> Option<String> {
    if let Some(d) = reference.keys().find(|d| !other.contains_key(d)) {
        return Some(format!("missing {d}"));
    }
    other
        .keys()
        .find(|d| !reference.contains_key(d))
        .map(|d| format!("extra {d}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(model: &str, l: u32, values: &[(f64, i64)]) -> Vec<PredictionRow> {
        let start = NaiveDate::from_ymd_opt(2023, 7, 3).unwrap();
        values
            .iter()
            .enumerate()
            .map(|(i, &(prediction, actual))| PredictionRow {
                model: model.into(),
                date: start + chrono::Days::new(i as u64),
                lookback: l,
                prediction,
                actual,
            })
            .collect()
    }

    #[test]
    fn perfect_model() {
        let r = rows("llm", 0, &[(3.0, 3), (-2.0, -2), (1.0, 1)]);
        let s = evaluate_run(&r, &["llm".into()], &[0], TieRule::Positive).unwrap();
        let c = s.get("llm", 0).unwrap();
        assert_eq!((c.acc, c.mcc, c.rmse, c.n), (1.0, 1.0, 0.0, 3));
        assert_eq!(
            s.to_csv(),
            "model,lookback,acc,mcc,rmse,n\nllm,0,1.000000,1.000000,0.000000,3\n"
        );
    }

    #[test]
    fn layout_follows_model_order_then_lookback() {
        let mut r = rows("llm", 1, &[(1.0, 1), (-1.0, 2)]);
        r.extend(rows("llm", 0, &[(1.0, 1), (-1.0, 2)]));
        r.extend(rows("naive", 0, &[(1.0, 1), (1.0, 2)]));
        r.extend(rows("naive", 1, &[(1.0, 1), (1.0, 2)]));
        let s = evaluate_run(&r, &["llm".into(), "naive".into()], &[1, 0], TieRule::Positive).unwrap();
        let order: Vec<(String, u32)> = s.cells.iter().map(|c| (c.model.clone(), c.lookback)).collect();
        assert_eq!(
            order,
            vec![
                ("llm".into(), 0),
                ("llm".into(), 1),
                ("naive".into(), 0),
                ("naive".into(), 1)
            ]
        );
    }

    #[test]
    fn missing_baseline_date_is_misaligned() {
        let mut r = rows("llm", 0, &[(1.0, 1), (-1.0, 2), (2.0, 2)]);
        r.extend(rows("naive", 0, &[(1.0, 1), (1.0, 2)]));
        let err = evaluate_run(&r, &["llm".into(), "naive".into()], &[0], TieRule::Positive).unwrap_err();
        assert!(matches!(err, EvalError::MisalignedDates { ref model, .. } if model == "naive"));
    }

    #[test]
    fn empty_lookback_cell() {
        let r = rows("llm", 0, &[(1.0, 1)]);
        assert_eq!(
            evaluate_run(&r, &["llm".into()], &[0, 5], TieRule::Positive).unwrap_err(),
            EvalError::EmptyCell(5)
        );
    }
}
