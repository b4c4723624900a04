use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::context::{price_delta_at, TruncationMode};
use crate::corpus::PriceAccess;

use super::EvalError;

/// Extra observations beyond the order that an AR fit insists on.
pub const AR_MIN_EXTRA: usize = 10;

/// Relative singular-value floor below which the design is rank deficient.
const RANK_TOL: f64 = 1e-10;

/// An unfitted baseline, as named in a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    Naive,
    Drift,
    Ar { order: usize },
}

impl BaselineKind {
    pub fn name(&self) -> String {
        match self {
            BaselineKind::Naive => "naive".into(),
            BaselineKind::Drift => "drift".into(),
            BaselineKind::Ar { order } => format!("ar{order}"),
        }
    }

    pub fn fit(&self, history: &[f64]) -> Result<BaselineModel, EvalError> {
        match *self {
            BaselineKind::Naive => Ok(BaselineModel::Naive),
            BaselineKind::Drift => Ok(BaselineModel::Drift),
            BaselineKind::Ar { order } => fit_ar(history, order),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineModel {
    Naive,
    Drift,
    /// `x_t = intercept + sum_i coefs[i] * x_{t-1-i}`.
    Ar {
        intercept: f64,
        coefs: Vec<f64>,
    },
}

/// Ordinary least squares for `x_t = c + sum φ_i x_{t-i}`, solved by SVD.
pub fn fit_ar(series: &[f64], p: usize) -> Result<BaselineModel, EvalError> {
    if p == 0 {
        return Err(EvalError::InvalidOrder(p));
    }
    if series.len() < p + AR_MIN_EXTRA {
        return Err(EvalError::TooShort {
            needed: p + AR_MIN_EXTRA,
            got: series.len(),
        });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let rows = series.len() - p;
    let x = DMatrix::from_fn(rows, p + 1, |r, c| if c == 0 { 1.0 } else { series[p + r - c] });
    let y = DVector::from_fn(rows, |r, _| series[p + r]);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.min() <= RANK_TOL * smax {
        return Err(EvalError::SingularDesign);
    }
    let beta = svd.solve(&y, 0.0).map_err(|_| EvalError::SingularDesign)?;
    Ok(BaselineModel::Ar {
        intercept: beta[0],
        coefs: beta.iter().skip(1).copied().collect(),
    })
}

/// One-step-ahead forecast from the end of `history`.
pub fn baseline_forecast(model: &BaselineModel, history: &[f64]) -> Result<f64, EvalError> {
    let too_short = |needed: usize| EvalError::TooShort {
        needed,
        got: history.len(),
    };
    match model {
        BaselineModel::Naive => history.last().copied().ok_or_else(|| too_short(1)),
        BaselineModel::Drift => {
            let n = history.len();
            if n < 2 {
                return Err(too_short(2));
            }
            Ok(history[n - 1] + (history[n - 1] - history[0]) / (n - 1) as f64)
        }
        BaselineModel::Ar { intercept, coefs } => {
            if history.len() < coefs.len() {
                return Err(too_short(coefs.len()));
            }
            Ok(intercept + coefs.iter().zip(history.iter().rev()).map(|(c, x)| c * x).sum::<f64>())
        }
    }
}

/// The look-back-`l` target deltas that are fully known at question
/// position `pos`: `X_t(l)` for `l <= t <= pos - 1`. The newest close read
/// is `close[pos]`.
pub fn known_target_history<P: PriceAccess + ?Sized>(
    prices: &P,
    pos: usize,
    lookback: u32,
    g: TruncationMode,
) -> Result<Vec<f64>, EvalError> {
    (lookback as usize..pos)
        .map(|t| {
            price_delta_at(prices, t, lookback, g)
                .map(|d| d.value as f64)
                .map_err(|e| EvalError::History(e.to_string()))
        })
        .collect()
}

/// Fit on what is known at `pos` and forecast `X_pos(l)`.
pub fn walk_forward_forecast<P: PriceAccess + ?Sized>(
    prices: &P,
    pos: usize,
    lookback: u32,
    g: TruncationMode,
    kind: BaselineKind,
) -> Result<f64, EvalError> {
    let history = known_target_history(prices, pos, lookback, g)?;
    let model = kind.fit(&history)?;
    baseline_forecast(&model, &history)
}
