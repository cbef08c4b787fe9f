//! Answer providers. Everything that can answer an atomic subquery
//! implements [`Answerer`]: the ground-truth provider wraps the
//! geometric evaluator, the noisy provider corrupts ground truth with
//! configurable per-skill error rates, and the remote provider speaks
//! a tagged ICL wire format over HTTP ([`remote`]).
//!
//! All providers are safe to call concurrently. The noisy provider
//! derives a fresh rng per (scene, subquery) call from its seed, so
//! results do not depend on call order or thread scheduling.

pub mod icl;
pub mod remote;
pub mod tags;

pub use remote::{end2end_classify, RemoteAnswerer, RemoteConfig};
pub use tags::{parse_tagged_response, render_tagged, TagParseError};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compile::{AtomicSubquery, AnswerType, ReasoningKind, SubqueryTask};
use crate::eval::{evaluate, Answer, AnswerValue};
use crate::rng::rng_for;
use crate::scene::Scene;
use rand::Rng;

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("invalid noise profile: {0}")]
    Profile(String),
    #[error("{0}")]
    TagParse(#[from] tags::TagParseError),
    #[error("remote transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("remote protocol error: {0}")]
    Protocol(String),
}

/// One answered subquery: the value (or an unanswerable marker), the
/// reasoning text behind it, and the provider's uncertainty scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub subquery_id: String,
    pub value: Answer,
    pub cot_text: String,
    /// Finite, ≥ 1. Ground truth reports exactly 1.
    pub perplexity: f64,
}

pub trait Answerer: Send + Sync {
    fn answer(&self, scene: &Scene, subquery: &AtomicSubquery) -> Result<AnswerRecord, AnswerError>;

    /// Short tag for reports and file names.
    fn name(&self) -> String;
}

/// Wraps the evaluator: perplexity 1.0 and a templated CoT citing the
/// boxes involved.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruth;

impl Answerer for GroundTruth {
    fn answer(&self, scene: &Scene, subquery: &AtomicSubquery) -> Result<AnswerRecord, AnswerError> {
        let value = evaluate(scene, subquery);
        let cot_text = narrate(scene, subquery, &value);
        Ok(AnswerRecord {
            subquery_id: subquery.id.clone(),
            value,
            cot_text,
            perplexity: 1.0,
        })
    }

    fn name(&self) -> String {
        "truth".into()
    }
}

fn fmt_box(b: &crate::geometry::BBox) -> String {
    format!("[{}, {}, {}, {}]", b.x1(), b.y1(), b.x2(), b.y2())
}

/// Ground-truth reasoning text. Cites the bounding boxes that drive
/// the answer so downstream training samples are grounded.
fn narrate(scene: &Scene, sq: &AtomicSubquery, value: &Answer) -> String {
    if let Answer::Unanswerable { reason } = value {
        return format!("Cannot answer: {reason}.");
    }
    match &sq.task {
        SubqueryTask::CountObjects { selector } => {
            let boxes: Vec<String> = scene
                .objects
                .iter()
                .filter(|o| selector.matches(o))
                .map(|o| fmt_box(&o.bbox))
                .collect();
            format!(
                "Matches for {selector}: {}. Counting those whose center falls in the asked scope gives {value}.",
                if boxes.is_empty() { "none".to_string() } else { boxes.join(", ") }
            )
        }
        SubqueryTask::CheckRelation { a, b, .. }
        | SubqueryTask::CompareDistance { a, b, .. }
        | SubqueryTask::CompareSizeRatio { a, b, .. } => {
            let pick = |sel| {
                scene
                    .objects
                    .iter()
                    .filter(|o| crate::dsl::Selector::matches(sel, o))
                    .map(|o| fmt_box(&o.bbox))
                    .next()
                    .unwrap_or_else(|| "missing".to_string())
            };
            format!(
                "Comparing {a} at {} with {b} at {}: the answer is {value}.",
                pick(a),
                pick(b)
            )
        }
        SubqueryTask::ReadAttribute { selector, key, slot } => format!(
            "Reading {key} of {selector} slot {} in scan order: {value}.",
            slot + 1
        ),
        SubqueryTask::PairingCountsMatch { a, b } => {
            format!("Tallying {a} against {b}: equal counts is {value}.")
        }
        SubqueryTask::PairingSlotMatch { a, b, slot, by_key, .. } => format!(
            "Aligning {a} and {b} at pair {} and comparing {by_key}: {value}.",
            slot + 1
        ),
    }
}

/// Error behavior of a simulated imperfect answerer. Corruption
/// probability is per reasoning kind; `kappa` scales how much
/// perplexity inflates; `seed` fixes every draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub corruption: BTreeMap<ReasoningKind, f64>,
    pub kappa: f64,
    pub seed: u64,
}

impl NoiseProfile {
    /// Same corruption probability for every reasoning kind.
    pub fn uniform(p: f64, seed: u64) -> Result<Self, AnswerError> {
        let profile = NoiseProfile {
            corruption: ReasoningKind::ALL.iter().map(|k| (*k, p)).collect(),
            kappa: 1.0,
            seed,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn with_kind(mut self, kind: ReasoningKind, p: f64) -> Result<Self, AnswerError> {
        self.corruption.insert(kind, p);
        self.validate()?;
        Ok(self)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self, AnswerError> {
        self.kappa = kappa;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), AnswerError> {
        for (kind, p) in &self.corruption {
            if !p.is_finite() || !(0.0..=1.0).contains(p) {
                return Err(AnswerError::Profile(format!(
                    "corruption probability for {kind:?} must be in [0, 1], got {p}"
                )));
            }
        }
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(AnswerError::Profile(format!(
                "kappa must be finite and non-negative, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    fn p(&self, kind: ReasoningKind) -> f64 {
        self.corruption.get(&kind).copied().unwrap_or(0.0)
    }
}

/// Corrupts ground truth with probability p for the subquery's
/// reasoning kind. Numeric answers drift by ±k with a geometric tail
/// (halving odds per extra step, mirrored positive when the drift
/// would go negative), booleans flip, categorical answers move
/// uniformly to a wrong in-set value. Perplexity follows
/// `1 + kappa * (1 if corrupted else u)` with `u` uniform in
/// [0, 0.25].
///
/// At p = 0 for a kind, records are identical to ground truth,
/// perplexity included.
#[derive(Debug, Clone)]
pub struct NoisyAnswerer {
    pub profile: NoiseProfile,
}

impl NoisyAnswerer {
    pub fn new(profile: NoiseProfile) -> Result<Self, AnswerError> {
        profile.validate()?;
        Ok(NoisyAnswerer { profile })
    }
}

impl Answerer for NoisyAnswerer {
    fn answer(&self, scene: &Scene, subquery: &AtomicSubquery) -> Result<AnswerRecord, AnswerError> {
        let truth = GroundTruth.answer(scene, subquery)?;
        let p = self.profile.p(subquery.reasoning_kind);
        if p == 0.0 {
            return Ok(truth);
        }
        let mut rng = rng_for(self.profile.seed, &[&scene.image_ref, &subquery.id]);
        let corrupt_draw = rng.random::<f64>() < p;
        let u = rng.random::<f64>() * 0.25;

        let mut corrupted = false;
        let value = match truth.value {
            Answer::Value(v) if corrupt_draw => {
                let (v2, did) = corrupt_value(v, &subquery.answer_type, &mut rng);
                corrupted = did;
                Answer::Value(v2)
            }
            other => other,
        };
        let cot_text = if corrupted {
            // A wrong answer comes with confidently wrong reasoning,
            // not the ground-truth trace.
            format!(
                "Looking at the scene, the answer is {}.",
                match &value {
                    Answer::Value(v) => v.to_string(),
                    Answer::Unanswerable { .. } => unreachable!("corruption only touches values"),
                }
            )
        } else {
            truth.cot_text
        };
        Ok(AnswerRecord {
            subquery_id: truth.subquery_id,
            value,
            cot_text,
            perplexity: 1.0 + self.profile.kappa * if corrupted { 1.0 } else { u },
        })
    }

    fn name(&self) -> String {
        "noisy".into()
    }
}

fn corrupt_value(
    v: AnswerValue,
    answer_type: &AnswerType,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (AnswerValue, bool) {
    match v {
        AnswerValue::Numeric(x) => {
            let mut k = 1.0;
            while rng.random::<f64>() < 0.5 {
                k += 1.0;
            }
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut out = x + sign * k;
            if out < 0.0 {
                // Counts cannot go negative; mirror the drift upward.
                out = x + k;
            }
            (AnswerValue::Numeric(out), true)
        }
        AnswerValue::Boolean(b) => (AnswerValue::Boolean(!b), true),
        AnswerValue::Categorical(s) => {
            let AnswerType::Categorical(allowed) = answer_type else {
                return (AnswerValue::Categorical(s), false);
            };
            let wrong: Vec<&String> = allowed.iter().filter(|v| **v != s).collect();
            if wrong.is_empty() {
                return (AnswerValue::Categorical(s), false);
            }
            let pick = wrong[rng.random_range(0..wrong.len())];
            (AnswerValue::Categorical(pick.clone()), true)
        }
    }
}
