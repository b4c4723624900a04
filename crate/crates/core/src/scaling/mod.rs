//! Value-to-score scaling and the inverse rescaling.
//!
//! Shot deltas are multiplied by a per-date factor so that, inside the
//! trailing window, they fit the attainable total-score range; the model's
//! total score is divided by the same kind of factor to get back to index
//! points. The factor is widened by the ratio of two Student-t quantiles to
//! leave room for moves beyond the recent extremes.

mod rolling;
mod tdist;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rolling::{rolling_bounds, rolling_bounds_all, RollingBounds};
pub use tdist::{ln_gamma, reg_inc_beta, t_cdf, t_quantile};

use crate::context::ShotWindow;

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("invalid scaling parameters: {0}")]
    InvalidParams(String),
    #[error("rolling window at {date} needs {needed} deltas, only {available} available")]
    InsufficientHistory {
        date: NaiveDate,
        needed: usize,
        available: usize,
    },
    #[error("no delta recorded for {0}")]
    MissingDelta(NaiveDate),
    #[error("multiplier must be positive, got {0}")]
    NonpositiveMultiplier(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingParams {
    /// Largest absolute score a single factor can receive.
    pub score_max: u32,
    pub n_factors: u32,
    /// Rolling window length in trading days.
    pub window: usize,
    pub p_hi: f64,
    pub p_lo: f64,
    /// Degrees of freedom of the t distribution.
    pub df: u32,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self {
            score_max: 2,
            n_factors: 10,
            window: 21,
            p_hi: 0.99,
            p_lo: 0.95,
            df: 21,
        }
    }
}

impl ScalingParams {
    pub fn validate(&self) -> Result<(), ScalingError> {
        let bad = |m: &str| Err(ScalingError::InvalidParams(m.into()));
        if self.score_max == 0 || self.n_factors == 0 || self.window == 0 || self.df == 0 {
            return bad("score_max, n_factors, window and df must be positive");
        }
        if !(0.0 < self.p_lo && self.p_lo < self.p_hi && self.p_hi < 1.0) {
            return bad("need 0 < p_lo < p_hi < 1");
        }
        Ok(())
    }

    /// `score_max * n_factors`, the largest attainable |total score|.
    pub fn score_span(&self) -> f64 {
        f64::from(self.score_max) * f64::from(self.n_factors)
    }
}

/// Ratio of t quantiles, about 1.463 at the defaults.
pub fn dist_multiplier(params: &ScalingParams) -> Result<f64, ScalingError> {
    params.validate()?;
    quantile_ratio(params.p_hi, params.p_lo, params.df)
}

/// `t_quantile(p_hi, df) / t_quantile(p_lo, df)` without the ordering check.
pub fn quantile_ratio(p_hi: f64, p_lo: f64, df: u32) -> Result<f64, ScalingError> {
    let lo = t_quantile(p_lo, df)?;
    if lo == 0.0 {
        return Err(ScalingError::DomainError("denominator quantile is zero".into()));
    }
    Ok(t_quantile(p_hi, df)? / lo)
}

/// Factor adjustment multiplier for one trailing window.
///
/// A zero bound contributes an infinite ratio and drops out of the minimum;
/// if both bounds are zero the multiplier is 1.
pub fn factor_multiplier(bounds: &RollingBounds, params: &ScalingParams, m_dist: f64) -> Result<f64, ScalingError> {
    if !(m_dist > 0.0 && m_dist.is_finite()) {
        return Err(ScalingError::NonpositiveMultiplier(m_dist));
    }
    let span = params.score_span();
    let ratio = |bound: i64| {
        if bound == 0 {
            f64::INFINITY
        } else {
            (span / (m_dist * bound as f64)).abs()
        }
    };
    let m = ratio(bounds.x_min).min(ratio(bounds.x_max));
    Ok(if m.is_finite() { m } else { 1.0 })
}

/// A shot delta after scaling, as shown to the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledShotValue {
    pub date: NaiveDate,
    pub raw: i64,
    pub multiplier: f64,
    pub scaled: f64,
    /// `scaled` rounded half away from zero.
    pub displayed: i64,
}

impl ScaledShotValue {
    pub fn new(date: NaiveDate, raw: i64, multiplier: f64) -> Self {
        let scaled = raw as f64 * multiplier;
        Self {
            date,
            raw,
            multiplier,
            scaled,
            displayed: scaled.round() as i64,
        }
    }
}

/// Scale each shot's delta by the multiplier of its own date.
pub fn scale_shots<F>(
    window: &ShotWindow,
    mut bounds_for: F,
    params: &ScalingParams,
    m_dist: f64,
) -> Result<Vec<ScaledShotValue>, ScalingError>
where
    F: FnMut(NaiveDate) -> Result<RollingBounds, ScalingError>,
{
    window
        .shots
        .iter()
        .map(|shot| {
            let bounds = bounds_for(shot.delta.date)?;
            let m = factor_multiplier(&bounds, params, m_dist)?;
            Ok(ScaledShotValue::new(shot.delta.date, shot.delta.value, m))
        })
        .collect()
}

/// Map a total score back to index points.
pub fn rescale_score(total: f64, multiplier: f64) -> Result<f64, ScalingError> {
    if !multiplier.is_finite() || multiplier <= 0.0 {
        return Err(ScalingError::NonpositiveMultiplier(multiplier));
    }
    Ok(total / multiplier)
}
