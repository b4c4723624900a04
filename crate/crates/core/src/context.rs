//! Truncated price deltas, context sets and the moving five-shot window.
//!
//! For a question at trading position `d` with look-back `l`, shot `j`
//! (1..=5) pairs the factors of `d - j` with
//! `g(close[d - j + 1] - close[d - j - l])`. The newest price a window can
//! touch is therefore `close[d]`.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PriceAccess;
use crate::factors::FactorSet;

/// Shots per window.
pub const N_SHOTS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("date {0} is not in the price series")]
    UnknownDate(NaiveDate),
    #[error("{what} for {date} needs trading position {needed}, outside the available 0..{available}")]
    OutOfRange {
        date: NaiveDate,
        what: &'static str,
        needed: i64,
        available: usize,
    },
    #[error("no factor set for {0}")]
    MissingFactors(NaiveDate),
    #[error("factor set dated {found} supplied for {expected}")]
    DateMismatch { expected: NaiveDate, found: NaiveDate },
}

/// Rounding rule turning a real price difference into whole index points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    #[default]
    TowardZero,
    Floor,
}

impl TruncationMode {
    pub fn apply(self, x: f64) -> i64 {
        match self {
            TruncationMode::TowardZero => truncate(x),
            TruncationMode::Floor => x.floor() as i64,
        }
    }
}

/// Drop the fractional part, rounding toward zero.
pub fn truncate(x: f64) -> i64 {
    x.trunc() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceDelta {
    pub date: NaiveDate,
    pub lookback: u32,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSet {
    pub factors: FactorSet,
    pub delta: PriceDelta,
}

impl ContextSet {
    pub fn new(factors: FactorSet, delta: PriceDelta) -> Result<Self, ContextError> {
        if factors.date != delta.date {
            return Err(ContextError::DateMismatch {
                expected: delta.date,
                found: factors.date,
            });
        }
        Ok(Self { factors, delta })
    }
}

/// The five context sets preceding a question date, most recent first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotWindow {
    pub question_date: NaiveDate,
    pub lookback: u32,
    pub shots: Vec<ContextSet>,
}

fn close<P: PriceAccess + ?Sized>(
    series: &P,
    pos: i64,
    date: NaiveDate,
    what: &'static str,
) -> Result<f64, ContextError> {
    let out_of_range = || ContextError::OutOfRange {
        date,
        what,
        needed: pos,
        available: series.len(),
    };
    if pos < 0 {
        return Err(out_of_range());
    }
    series.close_at(pos as usize).ok_or_else(out_of_range)
}

/// `g(close[pos + 1] - close[pos - l])` for the date at `pos`.
pub fn price_delta_at<P: PriceAccess + ?Sized>(
    series: &P,
    pos: usize,
    lookback: u32,
    g: TruncationMode,
) -> Result<PriceDelta, ContextError> {
    let date = series.date_at(pos).ok_or(ContextError::OutOfRange {
        date: NaiveDate::MIN,
        what: "price delta",
        needed: pos as i64,
        available: series.len(),
    })?;
    let p = pos as i64;
    let past = close(series, p - lookback as i64, date, "price delta")?;
    let future = close(series, p + 1, date, "price delta")?;
    Ok(PriceDelta {
        date,
        lookback,
        value: g.apply(future - past),
    })
}

pub fn price_delta<P: PriceAccess + ?Sized>(
    series: &P,
    d: NaiveDate,
    lookback: u32,
    g: TruncationMode,
) -> Result<PriceDelta, ContextError> {
    let pos = series.position_of(d).ok_or(ContextError::UnknownDate(d))?;
    price_delta_at(series, pos, lookback, g)
}

/// Assemble the window for question date `d`.
pub fn build_shot_window<P: PriceAccess + ?Sized>(
    series: &P,
    factors_by_date: &BTreeMap<NaiveDate, FactorSet>,
    d: NaiveDate,
    lookback: u32,
    g: TruncationMode,
) -> Result<ShotWindow, ContextError> {
    let pos = series.position_of(d).ok_or(ContextError::UnknownDate(d))? as i64;
    let oldest = pos - N_SHOTS as i64 - lookback as i64;
    if oldest < 0 {
        return Err(ContextError::OutOfRange {
            date: d,
            what: "shot window",
            needed: oldest,
            available: series.len(),
        });
    }
    let mut shots = Vec::with_capacity(N_SHOTS);
    for j in 1..=N_SHOTS as i64 {
        let shot_pos = (pos - j) as usize;
        let shot_date = series.date_at(shot_pos).expect("position checked above");
        let factors = factors_by_date
            .get(&shot_date)
            .ok_or(ContextError::MissingFactors(shot_date))?;
        let delta = price_delta_at(series, shot_pos, lookback, g)?;
        shots.push(ContextSet::new(factors.clone(), delta)?);
    }
    Ok(ShotWindow {
        question_date: d,
        lookback,
        shots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PriceSeries, TrackedPrices};
    use proptest::prelude::*;

    fn series(closes: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2023, 6, 1).unwrap();
        PriceSeries::new(
            closes
                .iter()
                .enumerate()
                .map(|(i, &c)| (start + chrono::Days::new(i as u64), c))
                .collect(),
        )
        .unwrap()
    }

    fn factor_map(s: &PriceSeries) -> BTreeMap<NaiveDate, FactorSet> {
        s.dates()
            .map(|d| {
                let f = (1..=10).map(|i| format!("{d} factor {i}")).collect();
                (d, FactorSet::new(d, 0, f).unwrap())
            })
            .collect()
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncate(3.9), 3);
        assert_eq!(truncate(-3.9), -3);
        assert_eq!(truncate(5.0), 5);
        assert_eq!(TruncationMode::Floor.apply(-3.9), -4);
    }

    #[test]
    fn delta_examples() {
        let s = series(&[100.0, 103.4, 101.1, 105.9]);
        let g = TruncationMode::TowardZero;
        assert_eq!(price_delta_at(&s, 2, 1, g).unwrap().value, 2);
        assert_eq!(price_delta_at(&s, 2, 0, g).unwrap().value, 4);
        assert!(matches!(
            price_delta_at(&s, 3, 0, g),
            Err(ContextError::OutOfRange { .. })
        ));
        assert!(matches!(
            price_delta_at(&s, 0, 1, g),
            Err(ContextError::OutOfRange { .. })
        ));
    }

    #[test]
    fn window_reads_nothing_after_question_date() {
        let closes: Vec<f64> = (0..40).map(|i| 300.0 + (i as f64 * 1.7).sin() * 9.0).collect();
        let s = series(&closes);
        let tracked = TrackedPrices::new(&s);
        let d = s.date_at(30).unwrap();
        let w = build_shot_window(&tracked, &factor_map(&s), d, 1, TruncationMode::TowardZero).unwrap();
        assert_eq!(w.shots.len(), 5);
        assert_eq!(w.shots[0].delta.date, s.date_at(29).unwrap());
        assert_eq!(w.shots[4].delta.date, s.date_at(25).unwrap());
        assert_eq!(tracked.max_position_read(), Some(30));
    }

    #[test]
    fn missing_factors_and_short_history() {
        let closes: Vec<f64> = (0..40).map(|i| 300.0 + i as f64).collect();
        let s = series(&closes);
        let mut map = factor_map(&s);
        let d = s.date_at(30).unwrap();
        map.remove(&s.date_at(27).unwrap());
        assert_eq!(
            build_shot_window(&s, &map, d, 1, TruncationMode::TowardZero).unwrap_err(),
            ContextError::MissingFactors(s.date_at(27).unwrap())
        );
        let early = s.date_at(4).unwrap();
        assert!(matches!(
            build_shot_window(&s, &factor_map(&s), early, 1, TruncationMode::TowardZero),
            Err(ContextError::OutOfRange { .. })
        ));
    }

    #[test]
    fn consecutive_windows_share_four_sets() {
        let closes: Vec<f64> = (0..40).map(|i| 300.0 + (i % 7) as f64).collect();
        let s = series(&closes);
        let map = factor_map(&s);
        let g = TruncationMode::TowardZero;
        let a = build_shot_window(&s, &map, s.date_at(20).unwrap(), 2, g).unwrap();
        let b = build_shot_window(&s, &map, s.date_at(21).unwrap(), 2, g).unwrap();
        let shared = b.shots.iter().filter(|c| a.shots.contains(c)).count();
        assert_eq!(shared, 4);
        assert_eq!(&b.shots[1..], &a.shots[..4]);
    }

    proptest! {
        #[test]
        fn truncate_shrinks_toward_zero(x in -1e6f64..1e6) {
            let t = truncate(x) as f64;
            prop_assert!(t.abs() <= x.abs());
            prop_assert!(t == 0.0 || t.signum() == x.signum());
        }
    }
}
