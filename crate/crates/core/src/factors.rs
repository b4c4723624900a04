//! Key-factor extraction: a day's top reports in, exactly ten short factor
//! statements out.

use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReportDoc;
use crate::gateway::{Gateway, GatewayError, GenRequest};

/// Factors per day.
pub const N_FACTORS: usize = 10;
/// Maximum characters per factor after trimming.
pub const MAX_FACTOR_CHARS: usize = 500;

pub const EXTRACTION_SYSTEM_TEXT: &str = "You are a financial analyst; list exactly 10 key factors likely to \
influence the market, one line each, numbered 1-10, each under 30 words.";

pub const DEFAULT_EXTRACTION_TEMPLATE: &str = include_str!("../prompts/extract_factors.txt");

const RETRY_NOTE: &str = "Your previous answer was not a list of exactly 10 numbered factors. \
Answer again with exactly 10 lines numbered 1-10.";

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("no reports to combine")]
    EmptyInput,
    #[error("no numbered factor lines found")]
    NoFactorsFound,
    #[error("factor label {0} appears more than once")]
    DuplicateLabel(u32),
    #[error("invalid factor set: {0}")]
    InvalidFactorSet(String),
    #[error("factor extraction for {date} trial {trial} failed after {attempts} attempts: {last}")]
    ExtractionFailed {
        date: NaiveDate,
        trial: u32,
        attempts: u32,
        last: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// The ten key factors extracted for one date in one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSet {
    pub date: NaiveDate,
    pub trial_index: u32,
    factors: Vec<String>,
}

impl FactorSet {
    pub fn new(date: NaiveDate, trial_index: u32, factors: Vec<String>) -> Result<Self, FactorError> {
        if factors.len() != N_FACTORS {
            return Err(FactorError::InvalidFactorSet(format!(
                "expected {N_FACTORS} factors, got {}",
                factors.len()
            )));
        }
        let factors: Vec<String> = factors.into_iter().map(|f| f.trim().to_string()).collect();
        for (i, f) in factors.iter().enumerate() {
            if f.is_empty() {
                return Err(FactorError::InvalidFactorSet(format!("factor {} is empty", i + 1)));
            }
            if f.chars().count() > MAX_FACTOR_CHARS {
                return Err(FactorError::InvalidFactorSet(format!(
                    "factor {} exceeds {MAX_FACTOR_CHARS} characters",
                    i + 1
                )));
            }
        }
        Ok(Self {
            date,
            trial_index,
            factors,
        })
    }

    pub fn factors(&self) -> &[String] {
        &self.factors
    }

    /// Newline-joined factor text, the document compared across trials.
    pub fn joined(&self) -> String {
        self.factors.join("\n")
    }
}

/// `title\nbody` blocks separated by a blank line, in the given order.
pub fn combine_reports(docs: &[ReportDoc]) -> Result<String, FactorError> {
    if docs.is_empty() {
        return Err(FactorError::EmptyInput);
    }
    Ok(docs
        .iter()
        .map(|d| format!("{}\n{}", d.title, d.body))
        .collect::<Vec<_>>()
        .join("\n\n"))
}

fn numbered_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(\d{1,2})[.)]\s+(.+)$").expect("static regex"))
}

/// Pull `N. text` / `N) text` lines out of free text, ordered by label.
pub fn parse_factor_list(text: &str) -> Result<Vec<String>, FactorError> {
    let mut items: Vec<(u32, String)> = Vec::new();
    for line in text.lines() {
        let Some(c) = numbered_line().captures(line) else {
            continue;
        };
        let label: u32 = c[1].parse().expect("one or two digits");
        if items.iter().any(|(l, _)| *l == label) {
            return Err(FactorError::DuplicateLabel(label));
        }
        items.push((label, c[2].trim().to_string()));
    }
    if items.is_empty() {
        return Err(FactorError::NoFactorsFound);
    }
    items.sort_by_key(|(l, _)| *l);
    Ok(items.into_iter().map(|(_, t)| t).collect())
}

pub fn render_factor_list(factors: &[String]) -> String {
    factors
        .iter()
        .enumerate()
        .map(|(i, f)| format!("{}. {}", i + 1, f))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone)]
pub struct ExtractionOptions {
    /// Reject anything but exactly ten factors; otherwise keep the first ten
    /// of a longer list.
    pub strict_mode: bool,
    /// Extra attempts after a malformed answer.
    pub retries: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    /// User-message template with a `{REPORTS}` placeholder.
    pub template: String,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        Self {
            strict_mode: true,
            retries: 2,
            temperature: 0.2,
            max_tokens: 1024,
            template: DEFAULT_EXTRACTION_TEMPLATE.to_string(),
        }
    }
}

pub fn extraction_request(opts: &ExtractionOptions, combined: &str, trial_index: u32, attempt: u32) -> GenRequest {
    let mut system_text = EXTRACTION_SYSTEM_TEXT.to_string();
    if attempt > 0 {
        // A different system text gives the retry its own cache entry.
        system_text.push_str(&format!("\n{RETRY_NOTE} (attempt {})", attempt + 1));
    }
    GenRequest {
        system_text,
        user_text: opts.template.replace("{REPORTS}", combined),
        temperature: opts.temperature,
        max_tokens: opts.max_tokens,
        trial_index,
    }
}

fn accept(parsed: Vec<String>, strict: bool) -> Result<Vec<String>, String> {
    match parsed.len() {
        N_FACTORS => Ok(parsed),
        n if n > N_FACTORS && !strict => Ok(parsed.into_iter().take(N_FACTORS).collect()),
        n => Err(format!("expected {N_FACTORS} factors, got {n}")),
    }
}

pub fn extract_factors(
    gateway: &Gateway,
    date: NaiveDate,
    combined: &str,
    trial_index: u32,
    opts: &ExtractionOptions,
) -> Result<FactorSet, FactorError> {
    if combined.trim().is_empty() {
        return Err(FactorError::EmptyInput);
    }
    let attempts = opts.retries + 1;
    let mut last = String::new();
    for attempt in 0..attempts {
        let req = extraction_request(opts, combined, trial_index, attempt);
        let result = gateway.generate(&req)?;
        let outcome = parse_factor_list(&result.text)
            .map_err(|e| e.to_string())
            .and_then(|parsed| accept(parsed, opts.strict_mode))
            .and_then(|factors| FactorSet::new(date, trial_index, factors).map_err(|e| e.to_string()));
        match outcome {
            Ok(set) => return Ok(set),
            Err(reason) => last = reason,
        }
    }
    Err(FactorError::ExtractionFailed {
        date,
        trial: trial_index,
        attempts,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{request_digest, BackendConfig, GatewayOptions, MockFallback};
    use std::collections::HashMap;

    fn doc(t: &str, b: &str) -> ReportDoc {
        ReportDoc {
            date: NaiveDate::from_ymd_opt(2023, 6, 1).unwrap(),
            title: t.into(),
            body: b.into(),
            view_count: 1,
        }
    }

    fn d() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 6, 1).unwrap()
    }

    #[test]
    fn combine() {
        assert_eq!(
            combine_reports(&[doc("t1", "b1"), doc("t2", "b2")]).unwrap(),
            "t1\nb1\n\nt2\nb2"
        );
        assert_eq!(combine_reports(&[doc("t1", "b1")]).unwrap(), "t1\nb1");
        assert!(matches!(combine_reports(&[]), Err(FactorError::EmptyInput)));
    }

    #[test]
    fn parse_both_separators() {
        assert_eq!(parse_factor_list("1. A\n2) B").unwrap(), vec!["A", "B"]);
        assert_eq!(parse_factor_list("Intro\n  2. B\n1. A\n").unwrap(), vec!["A", "B"]);
        assert!(matches!(
            parse_factor_list("1. A\n1. B"),
            Err(FactorError::DuplicateLabel(1))
        ));
        assert!(matches!(
            parse_factor_list("Markets were calm today."),
            Err(FactorError::NoFactorsFound)
        ));
    }

    #[test]
    fn factor_set_invariants() {
        let ten: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
        assert!(FactorSet::new(d(), 0, ten.clone()).is_ok());
        assert!(FactorSet::new(d(), 0, ten[..9].to_vec()).is_err());
        let mut blank = ten.clone();
        blank[3] = "   ".into();
        assert!(FactorSet::new(d(), 0, blank).is_err());
        let mut long = ten;
        long[0] = "x".repeat(501);
        assert!(FactorSet::new(d(), 0, long).is_err());
    }

    fn scripted(responses: &[(GenRequest, String)]) -> (tempfile::TempDir, Gateway) {
        let dir = tempfile::tempdir().unwrap();
        let base = BackendConfig::mock("extractor", None, MockFallback::Off);
        let map: HashMap<String, String> = responses
            .iter()
            .map(|(r, t)| (request_digest(&base, r), t.clone()))
            .collect();
        let path = dir.path().join("fx.json");
        std::fs::write(&path, serde_json::to_string(&map).unwrap()).unwrap();
        let cfg = BackendConfig::mock("extractor", Some(path), MockFallback::Off);
        let gw = Gateway::new(cfg, None, GatewayOptions::default()).unwrap();
        (dir, gw)
    }

    fn numbered(n: usize) -> String {
        (1..=n)
            .map(|i| format!("{i}. factor {i}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn well_formed_extraction() {
        let opts = ExtractionOptions::default();
        let mut text = numbered(10);
        text = text
            .replace("1. factor 1\n", "1. Fed rate pause\n")
            .replace("10. factor 10", "10. Chip exports rebound");
        let (_dir, gw) = scripted(&[(extraction_request(&opts, "reports", 0, 0), text)]);
        let set = extract_factors(&gw, d(), "reports", 0, &opts).unwrap();
        assert_eq!(set.factors().len(), 10);
        assert_eq!(set.factors()[0], "Fed rate pause");
        assert_eq!(set.factors()[9], "Chip exports rebound");
    }

    #[test]
    fn short_lists_fail_after_retries() {
        let opts = ExtractionOptions::default();
        let script: Vec<_> = (0..3)
            .map(|a| (extraction_request(&opts, "r", 0, a), numbered(8)))
            .collect();
        let (_dir, gw) = scripted(&script);
        let err = extract_factors(&gw, d(), "r", 0, &opts).unwrap_err();
        assert!(matches!(err, FactorError::ExtractionFailed { attempts: 3, .. }));
    }

    #[test]
    fn retry_recovers() {
        let opts = ExtractionOptions::default();
        let script = vec![
            (extraction_request(&opts, "r", 0, 0), "no list here".to_string()),
            (extraction_request(&opts, "r", 0, 1), numbered(10)),
        ];
        let (_dir, gw) = scripted(&script);
        assert!(extract_factors(&gw, d(), "r", 0, &opts).is_ok());
    }

    #[test]
    fn long_lists_depend_on_strict_mode() {
        let strict = ExtractionOptions::default();
        let lenient = ExtractionOptions {
            strict_mode: false,
            ..ExtractionOptions::default()
        };
        let script: Vec<_> = (0..3)
            .map(|a| (extraction_request(&strict, "r", 0, a), numbered(12)))
            .collect();
        let (_dir, gw) = scripted(&script);
        assert!(matches!(
            extract_factors(&gw, d(), "r", 0, &strict),
            Err(FactorError::ExtractionFailed { .. })
        ));
        let set = extract_factors(&gw, d(), "r", 0, &lenient).unwrap();
        assert_eq!(set.factors()[9], "factor 10");
    }

    #[test]
    fn backend_errors_propagate() {
        let opts = ExtractionOptions::default();
        let (_dir, gw) = scripted(&[]);
        assert!(matches!(
            extract_factors(&gw, d(), "r", 0, &opts),
            Err(FactorError::Gateway(GatewayError::FixtureMiss(_)))
        ));
    }
}
