//! Trailing min/max of truncated deltas over a fixed number of trading days.

use std::collections::VecDeque;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ScalingError;
use crate::context::PriceDelta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingBounds {
    pub date: NaiveDate,
    pub x_min: i64,
    pub x_max: i64,
}

/// Bounds over the `window` deltas ending at (and including) date `t`.
///
/// `deltas` must be in date order.
pub fn rolling_bounds(deltas: &[PriceDelta], t: NaiveDate, window: usize) -> Result<RollingBounds, ScalingError> {
    if window == 0 {
        return Err(ScalingError::InvalidParams("window must be positive".into()));
    }
    let end = deltas
        .binary_search_by_key(&t, |d| d.date)
        .map_err(|_| ScalingError::MissingDelta(t))?;
    if end + 1 < window {
        return Err(ScalingError::InsufficientHistory {
            date: t,
            needed: window,
            available: end + 1,
        });
    }
    let slice = &deltas[end + 1 - window..=end];
    let x_min = slice.iter().map(|d| d.value).min().expect("window is nonempty");
    let x_max = slice.iter().map(|d| d.value).max().expect("window is nonempty");
    Ok(RollingBounds { date: t, x_min, x_max })
}

/// Streaming variant: bounds for every date that has a full window behind
/// it, via monotonic deques in O(n).
pub fn rolling_bounds_all(deltas: &[PriceDelta], window: usize) -> Vec<RollingBounds> {
    let mut out = Vec::with_capacity(deltas.len().saturating_sub(window.saturating_sub(1)));
    if window == 0 {
        return out;
    }
    let mut mins: VecDeque<usize> = VecDeque::new();
    let mut maxs: VecDeque<usize> = VecDeque::new();
    for (i, d) in deltas.iter().enumerate() {
        while mins.back().is_some_and(|&j| deltas[j].value >= d.value) {
            mins.pop_back();
        }
        mins.push_back(i);
        while maxs.back().is_some_and(|&j| deltas[j].value <= d.value) {
            maxs.pop_back();
        }
        maxs.push_back(i);
        if i + 1 < window {
            continue;
        }
        let start = i + 1 - window;
        while mins.front().is_some_and(|&j| j < start) {
            mins.pop_front();
        }
        while maxs.front().is_some_and(|&j| j < start) {
            maxs.pop_front();
        }
        out.push(RollingBounds {
            date: d.date,
            x_min: deltas[mins[0]].value,
            x_max: deltas[maxs[0]].value,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deltas(values: &[i64]) -> Vec<PriceDelta> {
        let start = NaiveDate::from_ymd_opt(2023, 6, 1).unwrap();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| PriceDelta {
                date: start + chrono::Days::new(i as u64),
                lookback: 0,
                value: v,
            })
            .collect()
    }

    #[test]
    fn examples() {
        let d = deltas(&[1, -4, 2]);
        let b = rolling_bounds(&d, d[2].date, 3).unwrap();
        assert_eq!((b.x_min, b.x_max), (-4, 2));
        let d = deltas(&[5, 5, 5]);
        let b = rolling_bounds(&d, d[2].date, 3).unwrap();
        assert_eq!((b.x_min, b.x_max), (5, 5));
        let d = deltas(&[1; 10]);
        assert!(matches!(
            rolling_bounds(&d, d[9].date, 21),
            Err(ScalingError::InsufficientHistory {
                needed: 21,
                available: 10,
                ..
            })
        ));
    }

    proptest! {
        #[test]
        fn streaming_matches_direct(values in prop::collection::vec(-50i64..50, 1..80), window in 1usize..25) {
            let d = deltas(&values);
            let all = rolling_bounds_all(&d, window);
            let direct: Vec<_> = d.iter().filter_map(|x| rolling_bounds(&d, x.date, window).ok()).collect();
            prop_assert_eq!(all, direct);
        }
    }
}
