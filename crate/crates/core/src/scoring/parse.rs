use std::sync::OnceLock;

use regex::Regex;

use crate::factors::N_FACTORS;

use super::{LikertScale, ScoredFactor, ScoringError};

fn candidate() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^[\s*\-#>]*factor\s+\d+\s*:").expect("static regex"))
}

fn score_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^[\s*\-#>]*factor\s+(\d+)\s*:\s*\**\s*score\s*=\s*(.*?)\s*\|\s*rationale\s*:\s*(.*?)\s*$")
            .expect("static regex")
    })
}

/// Parse `Factor <i>: score=<int or label> | rationale: <text>` lines.
///
/// Lines that do not start with `Factor <n>:` are treated as commentary and
/// skipped; lines that do must match the full format.
pub fn parse_scores(text: &str, scale: &LikertScale) -> Result<Vec<ScoredFactor>, ScoringError> {
    let max = scale.score_max();
    let mut slots: Vec<Option<ScoredFactor>> = vec![None; N_FACTORS];
    for line in text.lines() {
        if !candidate().is_match(line) {
            continue;
        }
        let malformed = |reason: &str| ScoringError::MalformedScoreLine {
            line: line.trim().to_string(),
            reason: reason.to_string(),
        };
        let caps = score_line()
            .captures(line)
            .ok_or_else(|| malformed("expected `Factor <i>: score=<s> | rationale: <text>`"))?;
        let index: usize = caps[1].parse().map_err(|_| malformed("bad factor number"))?;
        if !(1..=N_FACTORS).contains(&index) {
            return Err(malformed("factor number out of range"));
        }
        let raw = caps[2].trim().trim_matches('*').trim();
        let score = match raw.parse::<i64>() {
            Ok(v) => v,
            Err(_) => scale
                .value_of(raw)
                .ok_or_else(|| malformed("score is neither an integer nor a scale label"))?,
        };
        if score.abs() > max {
            return Err(ScoringError::ScoreOutOfRange { index, score, max });
        }
        let rationale = caps[3].trim();
        if rationale.is_empty() {
            return Err(malformed("empty rationale"));
        }
        let slot = &mut slots[index - 1];
        if slot.is_some() {
            return Err(ScoringError::DuplicateFactorIndex(index));
        }
        *slot = Some(ScoredFactor {
            index,
            score,
            rationale: rationale.to_string(),
        });
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or(ScoringError::MissingFactorIndex(i + 1)))
        .collect()
}

pub fn render_scores(scored: &[ScoredFactor]) -> String {
    scored
        .iter()
        .map(|s| format!("Factor {}: score={} | rationale: {}", s.index, s.score, s.rationale))
        .collect::<Vec<_>>()
        .join("\n")
}
