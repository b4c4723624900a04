//! Turn analyst-report text into quantitative next-day index forecasts.
//!
//! The pipeline extracts ten key factors per day from the most-viewed
//! reports, pairs recent factor sets with scaled price changes as five
//! in-context examples, asks a text-generation backend to score the current
//! factors on a five-point scale, and rescales the median total score back
//! into index points. Backtests compare the result with naive, drift and
//! autoregressive baselines on direction and magnitude.

pub mod config;
pub mod consistency;
pub mod context;
pub mod corpus;
pub mod evaluation;
pub mod factors;
pub mod gateway;
pub mod pipeline;
pub mod scaling;
pub mod scoring;
