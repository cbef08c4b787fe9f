//! The tagged response format: reasoning goes between `<think>` tags,
//! the final answer between `<answer>` tags. Parsing is first-span-wins
//! so trailing chatter after a closed answer tag is ignored.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compile::AnswerType;
use crate::eval::AnswerValue;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum TagParseError {
    #[error("response has no <answer> tag")]
    MissingAnswerTag,
    #[error("response opens an <answer> tag but never closes it")]
    UnclosedAnswerTag,
    #[error("cannot read {expected} answer from {got:?}")]
    Coercion { expected: String, got: String },
    #[error("answer {value:?} is not one of the allowed values {allowed:?}")]
    OutsideSet { value: String, allowed: Vec<String> },
}

/// Inverse of [`parse_tagged_response`] for well-formed records.
pub fn render_tagged(cot_text: &str, answer_text: &str) -> String {
    format!("{THINK_OPEN}{cot_text}{THINK_CLOSE}{ANSWER_OPEN}{answer_text}{ANSWER_CLOSE}")
}

pub fn parse_tagged_response(
    text: &str,
    expected: &AnswerType,
) -> Result<(String, AnswerValue), TagParseError> {
    let cot = first_span(text, THINK_OPEN, THINK_CLOSE)
        .unwrap_or(Ok(""))
        // An unclosed think span is chatter, not a protocol breach.
        .unwrap_or("")
        .trim()
        .to_string();
    let raw = match first_span(text, ANSWER_OPEN, ANSWER_CLOSE) {
        None => return Err(TagParseError::MissingAnswerTag),
        Some(Err(())) => return Err(TagParseError::UnclosedAnswerTag),
        Some(Ok(inner)) => inner.trim(),
    };
    let value = coerce(raw, expected)?;
    Ok((cot, value))
}

/// `Some(Ok(inner))` for a closed span, `Some(Err(()))` for an opened
/// but unclosed one, `None` when the open tag is absent.
fn first_span<'t>(text: &'t str, open: &str, close: &str) -> Option<Result<&'t str, ()>> {
    let start = text.find(open)? + open.len();
    match text[start..].find(close) {
        Some(end) => Some(Ok(&text[start..start + end])),
        None => Some(Err(())),
    }
}

fn coerce(raw: &str, expected: &AnswerType) -> Result<AnswerValue, TagParseError> {
    match expected {
        AnswerType::Numeric => {
            let lit = leading_decimal(raw).ok_or_else(|| TagParseError::Coercion {
                expected: "numeric".into(),
                got: raw.to_string(),
            })?;
            let n: f64 = lit.parse().map_err(|_| TagParseError::Coercion {
                expected: "numeric".into(),
                got: raw.to_string(),
            })?;
            Ok(AnswerValue::Numeric(n))
        }
        AnswerType::Boolean => match raw.to_ascii_lowercase().as_str() {
            "yes" | "true" => Ok(AnswerValue::Boolean(true)),
            "no" | "false" => Ok(AnswerValue::Boolean(false)),
            _ => Err(TagParseError::Coercion {
                expected: "boolean".into(),
                got: raw.to_string(),
            }),
        },
        AnswerType::Categorical(allowed) => {
            if allowed.iter().any(|v| v == raw) {
                Ok(AnswerValue::Categorical(raw.to_string()))
            } else {
                Err(TagParseError::OutsideSet {
                    value: raw.to_string(),
                    allowed: allowed.clone(),
                })
            }
        }
    }
}

/// Longest prefix of `s` that forms a decimal literal:
/// optional sign, digits, optional fractional part.
fn leading_decimal(s: &str) -> Option<&str> {
    let bytes = s.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i == digits_start {
        return None;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        let frac_start = i + 1;
        let mut j = frac_start;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > frac_start {
            i = j;
        }
    }
    Some(&s[..i])
}
