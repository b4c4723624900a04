use crate::context::N_SHOTS;
use crate::factors::{render_factor_list, N_FACTORS};
use crate::scaling::ScaledShotValue;

use super::{LikertScale, ScoringError};

pub const SCORING_SYSTEM_TEXT: &str = "You are a financial analyst. Score each key factor's likely influence on \
the market using the given scale, reasoning step by step, and reply only in the requested format.";

pub const DEFAULT_SCORING_TEMPLATE: &str = include_str!("../../prompts/factor_scoring.txt");

/// One in-context example: a past day's factors and the scaled change shown
/// alongside them.
#[derive(Debug, Clone, Copy)]
pub struct ShotExample<'a> {
    pub factors: &'a [String],
    pub value: &'a ScaledShotValue,
}

fn render_scale(scale: &LikertScale) -> String {
    scale
        .levels()
        .iter()
        .map(|l| match l.value {
            v if v > 0 => format!("{} = +{v}", l.label),
            v => format!("{} = {v}", l.label),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_shots(shots: &[ShotExample<'_>]) -> String {
    shots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ago = i + 1;
            let unit = if ago == 1 { "day" } else { "days" };
            format!(
                "Example {ago} ({ago} trading {unit} before the question)\nKey factors:\n{}\nScaled price change: {}",
                render_factor_list(s.factors),
                s.value.displayed
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Fill the `{SCALE}`, `{SHOTS}` and `{QUESTION}` placeholders.
pub fn render_prompt(
    template: &str,
    shots: &[ShotExample<'_>],
    question: &[String],
    scale: &LikertScale,
) -> Result<String, ScoringError> {
    if shots.len() != N_SHOTS {
        return Err(ScoringError::InvalidPromptInput(format!(
            "expected {N_SHOTS} shots, got {}",
            shots.len()
        )));
    }
    if question.len() != N_FACTORS {
        return Err(ScoringError::InvalidPromptInput(format!(
            "expected {N_FACTORS} question factors, got {}",
            question.len()
        )));
    }
    if let Some(bad) = shots.iter().position(|s| s.factors.len() != N_FACTORS) {
        return Err(ScoringError::InvalidPromptInput(format!(
            "example {} has {} factors",
            bad + 1,
            shots[bad].factors.len()
        )));
    }
    Ok(template
        .replace("{SCALE}", &render_scale(scale))
        .replace("{SHOTS}", &render_shots(shots))
        .replace("{QUESTION}", &render_factor_list(question)))
}
