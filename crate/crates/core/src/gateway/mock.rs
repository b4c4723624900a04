//! Scripted backend for offline runs and tests.
//!
//! Responses are looked up by request digest in a JSON fixture. When the
//! fixture has no entry, an optional fallback synthesizes a well-formed
//! answer: a numbered factor list for extraction prompts, or one
//! `Factor <i>: score=<s> | rationale: <text>` line per question factor for
//! scoring prompts. The fallback recognises the two prompt kinds by the
//! section headers of the bundled templates.

use std::collections::HashMap;
use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};

use super::{request_digest, BackendConfig, GatewayError, GenRequest, MockFallback};

/// Header line preceding the combined reports in the extraction template.
pub const REPORTS_HEADER: &str = "Reports:";
/// Header line preceding the question factors in the scoring template.
pub const QUESTION_HEADER: &str = "### Question";

const POSITIVE: &[&str] = &[
    "rise",
    "rises",
    "rising",
    "gain",
    "gains",
    "growth",
    "strong",
    "stronger",
    "beat",
    "beats",
    "rebound",
    "rebounds",
    "inflow",
    "inflows",
    "upgrade",
    "upgrades",
    "surge",
    "surges",
    "improve",
    "improves",
    "improving",
    "recovery",
    "expands",
    "robust",
    "easing",
];
const NEGATIVE: &[&str] = &[
    "fall",
    "falls",
    "falling",
    "decline",
    "declines",
    "weak",
    "weaker",
    "loss",
    "losses",
    "miss",
    "misses",
    "slump",
    "slumps",
    "outflow",
    "outflows",
    "downgrade",
    "downgrades",
    "drop",
    "drops",
    "concern",
    "concerns",
    "contraction",
    "tightening",
    "slowdown",
    "risk",
];

pub struct MockBackend {
    fixtures: HashMap<String, String>,
    fallback: MockFallback,
    seed: u64,
    cfg: BackendConfig,
    numbered: Regex,
}

impl MockBackend {
    pub fn from_config(cfg: &BackendConfig, seed: u64) -> Result<Self, GatewayError> {
        let fixtures = match &cfg.fixture_path {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    GatewayError::InvalidConfig(format!("cannot read mock fixture {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    GatewayError::InvalidConfig(format!("mock fixture {} is not a digest map: {e}", path.display()))
                })?
            }
            None => HashMap::new(),
        };
        Ok(Self {
            fixtures,
            fallback: cfg.mock_fallback,
            seed,
            cfg: cfg.clone(),
            numbered: Regex::new(r"^\s*(\d{1,2})[.)]\s+(.+)$").expect("static regex"),
        })
    }

    /// The fixture entry for `digest`, if any.
    pub fn scripted(&self, digest: &str) -> Option<&str> {
        self.fixtures.get(digest).map(String::as_str)
    }

    pub fn respond(&self, digest: &str, req: &GenRequest) -> Result<String, GatewayError> {
        if let Some(text) = self.fixtures.get(digest) {
            return Ok(text.clone());
        }
        let rng = match self.fallback {
            MockFallback::Off => return Err(GatewayError::FixtureMiss(digest.to_string())),
            MockFallback::PerTrial => self.rng_for(digest),
            MockFallback::TrialInvariant => {
                let canonical = GenRequest {
                    trial_index: 0,
                    ..req.clone()
                };
                self.rng_for(&request_digest(&self.cfg, &canonical))
            }
        };
        if req.user_text.contains(QUESTION_HEADER) {
            Ok(self.score_response(req, rng))
        } else {
            Ok(self.factor_response(req, rng))
        }
    }

    fn rng_for(&self, digest: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"factorcast/mock/v1");
        h.update(self.seed.to_be_bytes());
        h.update(digest.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// Ten factors drawn from the report sentences; higher temperature swaps
    /// more of them for other sentences.
    fn factor_response(&self, req: &GenRequest, mut rng: ChaCha8Rng) -> String {
        let source = match req.user_text.rfind(REPORTS_HEADER) {
            Some(i) => &req.user_text[i + REPORTS_HEADER.len()..],
            None => req.user_text.as_str(),
        };
        let mut sentences: Vec<String> = Vec::new();
        for raw in source.split(['\n', '.']) {
            let s = raw.trim();
            if s.split_whitespace().count() >= 3 && !sentences.iter().any(|x| x == s) {
                sentences.push(s.to_string());
            }
        }
        let mut chosen: Vec<String> = sentences.iter().take(10).cloned().collect();
        let mut pool: Vec<String> = sentences.iter().skip(10).cloned().collect();
        let swaps = (req.temperature * 10.0).round() as usize;
        for _ in 0..swaps {
            if pool.is_empty() || chosen.is_empty() {
                break;
            }
            let slot = rng.random_range(0..chosen.len());
            let pick = rng.random_range(0..pool.len());
            std::mem::swap(&mut chosen[slot], &mut pool[pick]);
        }
        while chosen.len() < 10 {
            chosen.push(format!("Market conditions remain mixed (item {})", chosen.len() + 1));
        }
        chosen
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let words: Vec<&str> = s.split_whitespace().take(30).collect();
                format!("{}. {}", i + 1, words.join(" "))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Lexicon score per question factor, nudged by one step with a
    /// probability that grows with temperature.
    fn score_response(&self, req: &GenRequest, mut rng: ChaCha8Rng) -> String {
        let question = match req.user_text.rfind(QUESTION_HEADER) {
            Some(i) => &req.user_text[i..],
            None => req.user_text.as_str(),
        };
        let mut factors: Vec<String> = Vec::new();
        for line in question.lines() {
            if let Some(c) = self.numbered.captures(line) {
                factors.push(c[2].trim().to_string());
                if factors.len() == 10 {
                    break;
                }
            }
        }
        while factors.len() < 10 {
            factors.push(String::new());
        }
        let nudge_p = (req.temperature * 1.5).min(1.0);
        let mut lines = Vec::with_capacity(10);
        for (i, factor) in factors.iter().enumerate() {
            let mut score = lexicon_score(factor);
            if factor.is_empty() {
                score = rng.random_range(-2..=2);
            } else if rng.random::<f64>() < nudge_p {
                score += if rng.random::<bool>() { 1 } else { -1 };
            }
            let score = score.clamp(-2, 2);
            let head: Vec<&str> = factor.split_whitespace().take(8).collect();
            let rationale = if head.is_empty() {
                "no clear signal in the supplied factor".to_string()
            } else {
                format!("assessed from \"{}\"", head.join(" "))
            };
            lines.push(format!("Factor {}: score={} | rationale: {}", i + 1, score, rationale));
        }
        lines.join("\n")
    }
}

fn lexicon_score(text: &str) -> i64 {
    let mut score = 0i64;
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        let w = word.to_lowercase();
        if POSITIVE.contains(&w.as_str()) {
            score += 1;
        } else if NEGATIVE.contains(&w.as_str()) {
            score -= 1;
        }
    }
    score.clamp(-2, 2)
}
