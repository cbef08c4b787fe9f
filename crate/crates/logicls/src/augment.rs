//! Training-set expansion. Two symbolic analogues of image-space
//! augmentation: cut-paste edits on scenes (move, duplicate, delete an
//! object, labels recomputed by re-classification, never by hand) and
//! template-based paraphrasing of subquery questions.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{classify_with_program, ClassifyError, UnanswerablePolicy};
use crate::answer::{Answerer, GroundTruth};
use crate::compile::{
    cmp_phrase, compile, relation_phrase, sel_phrase, AtomicSubquery, CompileError, Scope,
    SubqueryTask,
};
use crate::dsl::ScenarioSpec;
use crate::geometry::BBox;
use crate::resample::{Provenance, TrainingSample};
use crate::rng::rng_for;
use crate::scene::{Scene, SceneError};

/// Pasted objects may overlap existing same-category objects up to
/// this IoU; beyond it the evaluator could not tell them apart.
pub const DEFAULT_IOU_CAP: f64 = 0.3;

const PLACEMENT_TRIES: u32 = 64;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("scene {scene} has no object {object_id}")]
    UnknownObject { scene: String, object_id: String },
    #[error("target box lies outside the {width}x{height} canvas")]
    TargetOutsideCanvas { width: f64, height: f64 },
    #[error("target must keep the source size {want_w}x{want_h}, got {got_w}x{got_h}")]
    TargetSizeMismatch {
        want_w: f64,
        want_h: f64,
        got_w: f64,
        got_h: f64,
    },
    #[error("target overlaps a same-category object at IoU {iou:.3}, cap is {cap}")]
    OverlapCap { iou: f64, cap: f64 },
    #[error("no free spot for {object_id} after {tries} tries under IoU cap {cap}")]
    PlacementFailed {
        object_id: String,
        tries: u32,
        cap: f64,
    },
    #[error("paraphrase count {0} outside the 10..=20 range")]
    ParaphraseCount(usize),
    #[error("template bank for this task has {have} usable variants, need {need}")]
    BankTooSmall { have: usize, need: usize },
    #[error("sample {sample_id} references scene {scene_ref}, which the config does not carry")]
    MissingScene {
        sample_id: String,
        scene_ref: String,
    },
    #[error("sample {sample_id} references subquery {subquery_id}, which the program does not define")]
    UnknownSubquery {
        sample_id: String,
        subquery_id: String,
    },
    #[error("empty base set")]
    EmptyCotSet,
    #[error("no ops enabled")]
    NoOps,
    #[error("cut-paste enabled with no modes")]
    NoModes,
    #[error("multiplicity must be >= 1")]
    ZeroMultiplicity,
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutPasteMode {
    Move,
    Duplicate,
    Delete,
}

impl CutPasteMode {
    pub const ALL: [CutPasteMode; 3] =
        [CutPasteMode::Move, CutPasteMode::Duplicate, CutPasteMode::Delete];

    pub fn name(&self) -> &'static str {
        match self {
            CutPasteMode::Move => "move",
            CutPasteMode::Duplicate => "duplicate",
            CutPasteMode::Delete => "delete",
        }
    }
}

impl FromStr for CutPasteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown cut-paste mode {s:?}"))
    }
}

/// Edits one object and re-derives the scene's gold labels by running
/// the ground-truth classifier against `spec`. Uses the default IoU
/// cap; [`cut_paste_capped`] takes an explicit one.
pub fn cut_paste(
    scene: &Scene,
    object_id: &str,
    mode: CutPasteMode,
    target: Option<BBox>,
    spec: &ScenarioSpec,
    seed: u64,
) -> Result<Scene, AugmentError> {
    cut_paste_capped(scene, object_id, mode, target, spec, seed, DEFAULT_IOU_CAP)
}

pub fn cut_paste_capped(
    scene: &Scene,
    object_id: &str,
    mode: CutPasteMode,
    target: Option<BBox>,
    spec: &ScenarioSpec,
    seed: u64,
    iou_cap: f64,
) -> Result<Scene, AugmentError> {
    let index = scene
        .objects
        .iter()
        .position(|o| o.id == object_id)
        .ok_or_else(|| AugmentError::UnknownObject {
            scene: scene.image_ref.clone(),
            object_id: object_id.to_string(),
        })?;
    let mut edited = scene.clone();
    match mode {
        CutPasteMode::Delete => {
            edited.objects.remove(index);
        }
        CutPasteMode::Move | CutPasteMode::Duplicate => {
            let source = edited.objects[index].clone();
            // A moved object does not collide with its own old spot;
            // a duplicate does.
            let exclude = if mode == CutPasteMode::Move {
                Some(index)
            } else {
                None
            };
            let placed = match target {
                Some(t) => {
                    check_target(&edited, &source.bbox, &t, exclude, &source.category, iou_cap)?;
                    t
                }
                None => random_placement(
                    &edited,
                    &source.bbox,
                    exclude,
                    &source.category,
                    iou_cap,
                    seed,
                    object_id,
                    mode,
                )?,
            };
            match mode {
                CutPasteMode::Move => edited.objects[index].bbox = placed,
                CutPasteMode::Duplicate => {
                    let mut dup = source;
                    dup.id = fresh_id(&edited, &dup.id);
                    dup.bbox = placed;
                    edited.objects.push(dup);
                }
                CutPasteMode::Delete => unreachable!(),
            }
        }
    }
    edited.validate()?;
    let program = compile(spec)?;
    let verdict =
        classify_with_program(&edited, &program, &GroundTruth, UnanswerablePolicy::Strict)?;
    edited.gold_labels = Some(verdict.labels);
    Ok(edited)
}

fn check_target(
    scene: &Scene,
    source: &BBox,
    target: &BBox,
    exclude: Option<usize>,
    category: &str,
    iou_cap: f64,
) -> Result<(), AugmentError> {
    let (want_w, want_h) = (source.width(), source.height());
    let (got_w, got_h) = (target.width(), target.height());
    if (got_w - want_w).abs() > 1e-6 || (got_h - want_h).abs() > 1e-6 {
        return Err(AugmentError::TargetSizeMismatch {
            want_w,
            want_h,
            got_w,
            got_h,
        });
    }
    if target.x1() < 0.0
        || target.y1() < 0.0
        || target.x2() > scene.width
        || target.y2() > scene.height
    {
        return Err(AugmentError::TargetOutsideCanvas {
            width: scene.width,
            height: scene.height,
        });
    }
    if let Some(iou) = worst_overlap(scene, target, exclude, category) {
        if iou > iou_cap {
            return Err(AugmentError::OverlapCap { iou, cap: iou_cap });
        }
    }
    Ok(())
}

fn worst_overlap(
    scene: &Scene,
    target: &BBox,
    exclude: Option<usize>,
    category: &str,
) -> Option<f64> {
    scene
        .objects
        .iter()
        .enumerate()
        .filter(|(i, o)| Some(*i) != exclude && o.category == category)
        .map(|(_, o)| target.iou(&o.bbox))
        .fold(None, |acc, iou| Some(acc.map_or(iou, |a: f64| a.max(iou))))
}

#[allow(clippy::too_many_arguments)]
fn random_placement(
    scene: &Scene,
    source: &BBox,
    exclude: Option<usize>,
    category: &str,
    iou_cap: f64,
    seed: u64,
    object_id: &str,
    mode: CutPasteMode,
) -> Result<BBox, AugmentError> {
    let (w, h) = (source.width(), source.height());
    let max_x = (scene.width - w).max(0.0);
    let max_y = (scene.height - h).max(0.0);
    let mut rng = rng_for(seed, &["cut-paste", &scene.image_ref, object_id, mode.name()]);
    for _ in 0..PLACEMENT_TRIES {
        let x1 = rng.random::<f64>() * max_x;
        let y1 = rng.random::<f64>() * max_y;
        let candidate = BBox::new(x1, y1, x1 + w, y1 + h).expect("positive extent");
        let clear = worst_overlap(scene, &candidate, exclude, category)
            .map_or(true, |iou| iou <= iou_cap);
        if clear {
            return Ok(candidate);
        }
    }
    Err(AugmentError::PlacementFailed {
        object_id: object_id.to_string(),
        tries: PLACEMENT_TRIES,
        cap: iou_cap,
    })
}

fn fresh_id(scene: &Scene, base: &str) -> String {
    for k in 1u32.. {
        let candidate = format!("{base}_copy{k}");
        if scene.object(&candidate).is_none() {
            return candidate;
        }
    }
    unreachable!()
}

/// `n` distinct rewordings of the subquery's question, none equal to
/// the original text, drawn from the task family's template bank.
/// Deterministic per seed.
pub fn paraphrase_expand(
    subquery: &AtomicSubquery,
    n: usize,
    seed: u64,
) -> Result<Vec<String>, AugmentError> {
    if !(10..=20).contains(&n) {
        return Err(AugmentError::ParaphraseCount(n));
    }
    let mut bank = fill_bank(subquery);
    let mut seen = BTreeSet::new();
    bank.retain(|t| t != &subquery.question_text && seen.insert(t.clone()));
    if bank.len() < n {
        return Err(AugmentError::BankTooSmall {
            have: bank.len(),
            need: n,
        });
    }
    let mut rng = rng_for(seed, &["paraphrase", &subquery.id]);
    for i in 0..n {
        let j = rng.random_range(i..bank.len());
        bank.swap(i, j);
    }
    bank.truncate(n);
    Ok(bank)
}

fn scope_phrase(subquery: &AtomicSubquery) -> String {
    match &subquery.scope {
        None | Some(Scope::Slot(_)) => "in the image".to_string(),
        Some(Scope::Region { name, .. }) => format!("inside the {name} region"),
        Some(Scope::Cell {
            region, row, col, ..
        }) => format!(
            "inside row {}, column {} of the {region} grid",
            row + 1,
            col + 1
        ),
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

fn fill_bank(subquery: &AtomicSubquery) -> Vec<String> {
    match &subquery.task {
        SubqueryTask::CountObjects { selector } => {
            let pairs = [
                ("{sel}", sel_phrase(selector)),
                ("{scope}", scope_phrase(subquery)),
            ];
            fill(COUNT_TEMPLATES, &pairs)
        }
        SubqueryTask::CheckRelation { a, b, relation } => {
            let pairs = [
                ("{a}", sel_phrase(a)),
                ("{b}", sel_phrase(b)),
                ("{rel}", relation_phrase(*relation).to_string()),
            ];
            fill(RELATION_TEMPLATES, &pairs)
        }
        SubqueryTask::CompareDistance { a, b, cmp, threshold } => {
            let pairs = [
                ("{a}", sel_phrase(a)),
                ("{b}", sel_phrase(b)),
                ("{cmp}", cmp_phrase(*cmp).to_string()),
                ("{t}", fmt_num(*threshold)),
            ];
            fill(DISTANCE_TEMPLATES, &pairs)
        }
        SubqueryTask::CompareSizeRatio { a, b, cmp, threshold } => {
            let pairs = [
                ("{a}", sel_phrase(a)),
                ("{b}", sel_phrase(b)),
                ("{cmp}", cmp_phrase(*cmp).to_string()),
                ("{t}", fmt_num(*threshold)),
            ];
            fill(SIZE_TEMPLATES, &pairs)
        }
        SubqueryTask::ReadAttribute { selector, key, slot } => {
            let pairs = [
                ("{sel}", sel_phrase(selector)),
                ("{key}", key.clone()),
                ("{ord}", (slot + 1).to_string()),
            ];
            fill(ATTRIBUTE_TEMPLATES, &pairs)
        }
        SubqueryTask::PairingCountsMatch { a, b } => {
            let pairs = [("{a}", sel_phrase(a)), ("{b}", sel_phrase(b))];
            fill(PAIR_COUNT_TEMPLATES, &pairs)
        }
        SubqueryTask::PairingSlotMatch {
            a,
            b,
            by_key,
            order_by,
            slot,
        } => {
            let order = match order_by {
                Some(k) => format!("ordered by {k}"),
                None => "in top-to-bottom, left-to-right order".to_string(),
            };
            let pairs = [
                ("{a}", sel_phrase(a)),
                ("{b}", sel_phrase(b)),
                ("{key}", by_key.clone()),
                ("{ord}", (slot + 1).to_string()),
                ("{op}", order),
            ];
            fill(PAIR_SLOT_TEMPLATES, &pairs)
        }
    }
}

fn fill(templates: &[&str], pairs: &[(&str, String)]) -> Vec<String> {
    templates
        .iter()
        .map(|t| {
            let mut s = t.to_string();
            for (slot, value) in pairs {
                s = s.replace(slot, value);
            }
            s
        })
        .collect()
}

const COUNT_TEMPLATES: &[&str] = &[
    "How many {sel} are {scope}?",
    "Count the {sel} {scope}.",
    "What is the number of {sel} {scope}?",
    "How many {sel} can you see {scope}?",
    "Give the count of {sel} {scope}.",
    "How many {sel} appear {scope}?",
    "State how many {sel} are present {scope}.",
    "What is the total count of {sel} {scope}?",
    "How many {sel} are visible {scope}?",
    "Report the number of {sel} {scope}.",
    "How many {sel} are located {scope}?",
    "Tell me the number of {sel} {scope}.",
    "How many instances of {sel} are there {scope}?",
    "What count of {sel} do you observe {scope}?",
    "Determine how many {sel} are {scope}.",
    "How many {sel} does the picture show {scope}?",
    "Provide the number of {sel} {scope}.",
    "Exactly how many {sel} are there {scope}?",
    "How many {sel} lie {scope}?",
    "Count how many {sel} appear {scope}.",
    "What number of {sel} are found {scope}?",
    "How many {sel} would you count {scope}?",
    "Give the total number of {sel} {scope}.",
];

const RELATION_TEMPLATES: &[&str] = &[
    "Is the {a} {rel} the {b}? Answer yes or no.",
    "Answer yes or no: is the {a} {rel} the {b}?",
    "Would you say the {a} is {rel} the {b}? Answer yes or no.",
    "Check whether the {a} is {rel} the {b}. Answer yes or no.",
    "Is it true that the {a} is {rel} the {b}? Answer yes or no.",
    "Does the {a} sit {rel} the {b}? Answer yes or no.",
    "Confirm whether the {a} is {rel} the {b}. Answer yes or no.",
    "In this image, is the {a} {rel} the {b}? Answer yes or no.",
    "Looking at the image, is the {a} {rel} the {b}? Answer yes or no.",
    "Is the {a} positioned {rel} the {b}? Answer yes or no.",
    "Tell me, yes or no: is the {a} {rel} the {b}?",
    "Verify that the {a} is {rel} the {b}. Answer yes or no.",
    "Is the {a} placed {rel} the {b}? Answer yes or no.",
    "Can the {a} be found {rel} the {b}? Answer yes or no.",
    "Does the image show the {a} {rel} the {b}? Answer yes or no.",
    "Yes or no: does the {a} appear {rel} the {b}?",
    "Is the {a} currently {rel} the {b}? Answer yes or no.",
    "State yes or no: is the {a} {rel} the {b}?",
    "Judge whether the {a} is {rel} the {b}. Answer yes or no.",
    "Decide if the {a} is {rel} the {b}. Answer yes or no.",
    "Is the {a} situated {rel} the {b}? Answer yes or no.",
    "Answer with yes or no: is the {a} {rel} the {b}?",
    "Does the {a} lie {rel} the {b}? Answer yes or no.",
];

const DISTANCE_TEMPLATES: &[&str] = &[
    "Is the distance between the {a} and the {b} {cmp} {t} pixels? Answer yes or no.",
    "Answer yes or no: is the distance between the {a} and the {b} {cmp} {t} pixels?",
    "Measuring center to center, is the distance between the {a} and the {b} {cmp} {t} pixels? Answer yes or no.",
    "Is the gap between the {a} and the {b} {cmp} {t} pixels? Answer yes or no.",
    "Would you say the distance from the {a} to the {b} is {cmp} {t} pixels? Answer yes or no.",
    "Check whether the distance between the {a} and the {b} is {cmp} {t} pixels. Answer yes or no.",
    "Is the {a} separated from the {b} by {cmp} {t} pixels? Answer yes or no.",
    "Is the spacing between the {a} and the {b} {cmp} {t} pixels? Answer yes or no.",
    "Verify that the distance between the {a} and the {b} is {cmp} {t} pixels. Answer yes or no.",
    "Yes or no: is the distance from the {a} to the {b} {cmp} {t} pixels?",
    "Does the distance between the {a} and the {b} come to {cmp} {t} pixels? Answer yes or no.",
    "Is the separation between the {a} and the {b} {cmp} {t} pixels? Answer yes or no.",
    "Is it true that the {a} and the {b} are {cmp} {t} pixels apart? Answer yes or no.",
    "Are the {a} and the {b} {cmp} {t} pixels apart? Answer yes or no.",
    "Judge whether the {a} and the {b} are {cmp} {t} pixels apart. Answer yes or no.",
    "Looking at the image, is the distance between the {a} and the {b} {cmp} {t} pixels? Answer yes or no.",
    "Decide if the distance between the {a} and the {b} is {cmp} {t} pixels. Answer yes or no.",
    "State yes or no: are the {a} and the {b} {cmp} {t} pixels apart?",
    "Confirm whether the {a} and the {b} sit {cmp} {t} pixels apart. Answer yes or no.",
    "Does the image show the {a} and the {b} {cmp} {t} pixels apart? Answer yes or no.",
    "Is the center distance between the {a} and the {b} {cmp} {t} pixels? Answer yes or no.",
    "Tell me, yes or no: is the distance between the {a} and the {b} {cmp} {t} pixels?",
];

const SIZE_TEMPLATES: &[&str] = &[
    "Is the area of the {a} {cmp} {t} times the area of the {b}? Answer yes or no.",
    "Answer yes or no: is the area of the {a} {cmp} {t} times the area of the {b}?",
    "Comparing areas, is the {a} {cmp} {t} times the size of the {b}? Answer yes or no.",
    "Is the {a} {cmp} {t} times as large as the {b}? Answer yes or no.",
    "Would you say the area of the {a} is {cmp} {t} times that of the {b}? Answer yes or no.",
    "Check whether the area of the {a} is {cmp} {t} times the area of the {b}. Answer yes or no.",
    "Is the size of the {a} {cmp} {t} times the size of the {b}? Answer yes or no.",
    "Verify that the {a} covers {cmp} {t} times the area of the {b}. Answer yes or no.",
    "Yes or no: does the {a} have {cmp} {t} times the area of the {b}?",
    "Does the {a} occupy {cmp} {t} times the area of the {b}? Answer yes or no.",
    "Is it true that the {a} is {cmp} {t} times the area of the {b}? Answer yes or no.",
    "In terms of area, is the {a} {cmp} {t} times the {b}? Answer yes or no.",
    "Judge whether the area of the {a} is {cmp} {t} times the area of the {b}. Answer yes or no.",
    "Looking at the image, is the area of the {a} {cmp} {t} times the area of the {b}? Answer yes or no.",
    "Decide if the {a} takes up {cmp} {t} times the area of the {b}. Answer yes or no.",
    "State yes or no: is the area of the {a} {cmp} {t} times the area of the {b}?",
    "Confirm whether the {a} spans {cmp} {t} times the area of the {b}. Answer yes or no.",
    "Does the image show the {a} at {cmp} {t} times the area of the {b}? Answer yes or no.",
    "Is the footprint of the {a} {cmp} {t} times the footprint of the {b}? Answer yes or no.",
    "Tell me, yes or no: is the area of the {a} {cmp} {t} times the area of the {b}?",
    "Measured by area, is the {a} {cmp} {t} times the {b}? Answer yes or no.",
    "Does the {a} measure {cmp} {t} times the area of the {b}? Answer yes or no.",
];

const ATTRIBUTE_TEMPLATES: &[&str] = &[
    "What is the {key} of {sel} number {ord} in top-to-bottom, left-to-right order?",
    "Reading top to bottom and left to right, what is the {key} of {sel} number {ord}?",
    "Give the {key} of {sel} number {ord}, counting top-to-bottom, left-to-right.",
    "What {key} does {sel} number {ord} have, in top-to-bottom, left-to-right order?",
    "State the {key} of {sel} number {ord} (top-to-bottom, left-to-right order).",
    "In top-to-bottom, left-to-right order, what is the {key} of {sel} number {ord}?",
    "Report the {key} of {sel} number {ord}, ordered top-to-bottom, left-to-right.",
    "Identify the {key} of {sel} number {ord} in top-to-bottom, left-to-right order.",
    "What is the {key} of the {sel} at position {ord}, counting top-to-bottom, left-to-right?",
    "Tell me the {key} of {sel} number {ord}, top-to-bottom, left-to-right.",
    "Which {key} does {sel} number {ord} show, in top-to-bottom, left-to-right order?",
    "Looking top-to-bottom, left-to-right, what {key} does {sel} number {ord} have?",
    "Determine the {key} of {sel} number {ord} in top-to-bottom, left-to-right order.",
    "Provide the {key} of {sel} number {ord}, taken in top-to-bottom, left-to-right order.",
    "For {sel} number {ord} (top-to-bottom, left-to-right), what is its {key}?",
    "What value of {key} does {sel} number {ord} carry, in top-to-bottom, left-to-right order?",
    "Name the {key} of {sel} number {ord}, ordered top-to-bottom then left-to-right.",
    "Check {sel} number {ord} in top-to-bottom, left-to-right order and state its {key}.",
    "What is the recorded {key} of {sel} number {ord}, top-to-bottom, left-to-right?",
    "Considering {sel} number {ord} in top-to-bottom, left-to-right order, what is the {key}?",
    "Read off the {key} of {sel} number {ord}, scanning top-to-bottom, left-to-right.",
    "What {key} is shown by {sel} number {ord}, in top-to-bottom, left-to-right order?",
    "Inspect {sel} number {ord} (top-to-bottom, left-to-right) and give its {key}.",
];

const PAIR_COUNT_TEMPLATES: &[&str] = &[
    "Are there exactly as many {a} as {b} in the image? Answer yes or no.",
    "Answer yes or no: are there exactly as many {a} as {b} in the image?",
    "Do the counts of {a} and {b} match exactly? Answer yes or no.",
    "Is the number of {a} equal to the number of {b}? Answer yes or no.",
    "Are {a} and {b} present in equal numbers? Answer yes or no.",
    "Check whether the image holds the same number of {a} and {b}. Answer yes or no.",
    "Yes or no: are the {a} and {b} counts identical?",
    "Is the count of {a} the same as the count of {b}? Answer yes or no.",
    "Does the image contain equally many {a} and {b}? Answer yes or no.",
    "Verify that there are exactly as many {a} as {b}. Answer yes or no.",
    "Would you say the {a} and {b} counts agree? Answer yes or no.",
    "Is it true that the image has as many {a} as {b}? Answer yes or no.",
    "Counting everything, are there as many {a} as {b}? Answer yes or no.",
    "Judge whether the number of {a} matches the number of {b}. Answer yes or no.",
    "State yes or no: is the number of {a} identical to the number of {b}?",
    "Do {a} and {b} appear in matching quantities? Answer yes or no.",
    "Looking at the image, are there exactly as many {a} as {b}? Answer yes or no.",
    "Decide if the image shows an equal number of {a} and {b}. Answer yes or no.",
    "Confirm whether {a} and {b} occur in the same quantity. Answer yes or no.",
    "Tell me, yes or no: do the numbers of {a} and {b} match?",
    "Are the quantities of {a} and {b} equal? Answer yes or no.",
    "Does the tally of {a} equal the tally of {b}? Answer yes or no.",
    "Is there one {b} for every {a}, with none left over? Answer yes or no.",
];

const PAIR_SLOT_TEMPLATES: &[&str] = &[
    "Do {a} number {ord} and {b} number {ord} ({op}) have the same {key}? Answer yes or no.",
    "Answer yes or no: do {a} number {ord} and {b} number {ord} ({op}) have the same {key}?",
    "Taking {a} number {ord} and {b} number {ord} ({op}), do they share the same {key}? Answer yes or no.",
    "Is the {key} of {a} number {ord} the same as the {key} of {b} number {ord} ({op})? Answer yes or no.",
    "Do {a} number {ord} and {b} number {ord} ({op}) agree on {key}? Answer yes or no.",
    "Check whether {a} number {ord} and {b} number {ord} ({op}) carry the same {key}. Answer yes or no.",
    "Yes or no: does {a} number {ord} match {b} number {ord} ({op}) on {key}?",
    "Do {a} number {ord} and {b} number {ord} ({op}) show matching {key} values? Answer yes or no.",
    "Verify that {a} number {ord} and {b} number {ord} ({op}) have identical {key} values. Answer yes or no.",
    "Would you say {a} number {ord} and {b} number {ord} ({op}) share one {key}? Answer yes or no.",
    "Is it true that {a} number {ord} and {b} number {ord} ({op}) have equal {key} values? Answer yes or no.",
    "Compare {a} number {ord} with {b} number {ord} ({op}): same {key}? Answer yes or no.",
    "Judge whether {a} number {ord} and {b} number {ord} ({op}) match on {key}. Answer yes or no.",
    "State yes or no: do {a} number {ord} and {b} number {ord} ({op}) hold the same {key}?",
    "Looking at the image, do {a} number {ord} and {b} number {ord} ({op}) have the same {key}? Answer yes or no.",
    "Decide if {a} number {ord} and {b} number {ord} ({op}) agree in {key}. Answer yes or no.",
    "Confirm whether the {key} of {a} number {ord} equals the {key} of {b} number {ord} ({op}). Answer yes or no.",
    "Tell me, yes or no: is the {key} of {a} number {ord} equal to that of {b} number {ord} ({op})?",
    "Does {a} number {ord} pair with {b} number {ord} ({op}) on the same {key}? Answer yes or no.",
    "Are the {key} values of {a} number {ord} and {b} number {ord} ({op}) identical? Answer yes or no.",
    "For position {ord} ({op}), do the {a} and the {b} share the same {key}? Answer yes or no.",
    "Is {key} consistent between {a} number {ord} and {b} number {ord} ({op})? Answer yes or no.",
    "Does the {key} of {a} number {ord} line up with {b} number {ord} ({op})? Answer yes or no.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    CutPaste,
    Paraphrase,
}

impl FromStr for AugmentOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cutpaste" | "cut-paste" | "cut_paste" => Ok(AugmentOp::CutPaste),
            "paraphrase" => Ok(AugmentOp::Paraphrase),
            other => Err(format!("unknown augment op {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub ops: Vec<AugmentOp>,
    /// Augmented samples produced per base sample. Slot `m` uses
    /// `ops[m % ops.len()]`.
    pub multiplicity: u32,
    pub iou_cap: f64,
    /// Cut-paste draws its edit from these.
    pub modes: Vec<CutPasteMode>,
    /// Scenes the base samples reference, keyed by image_ref.
    pub scenes: BTreeMap<String, Scene>,
}

impl AugmentConfig {
    pub fn new(ops: Vec<AugmentOp>, multiplicity: u32, scenes: BTreeMap<String, Scene>) -> Self {
        AugmentConfig {
            ops,
            multiplicity,
            iou_cap: DEFAULT_IOU_CAP,
            modes: CutPasteMode::ALL.to_vec(),
            scenes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedSet {
    /// Sorted by sample id.
    pub samples: Vec<TrainingSample>,
    /// Edited scenes the samples reference, keyed by image_ref.
    /// Paraphrase-only samples reuse base scenes and add nothing here.
    pub scenes: BTreeMap<String, Scene>,
    /// Non-fatal op failures, one line each.
    pub warnings: Vec<String>,
}

/// Expands `cot_set` by `multiplicity` augmented samples per base
/// sample. Gold answers always come from re-evaluating the (possibly
/// edited) scene, never from the base sample. Op failures are recorded
/// as warnings and skip that slot.
pub fn build_augmented_set(
    cot_set: &[TrainingSample],
    spec: &ScenarioSpec,
    config: &AugmentConfig,
    seed: u64,
) -> Result<AugmentedSet, AugmentError> {
    if cot_set.is_empty() {
        return Err(AugmentError::EmptyCotSet);
    }
    if config.ops.is_empty() {
        return Err(AugmentError::NoOps);
    }
    if config.multiplicity == 0 {
        return Err(AugmentError::ZeroMultiplicity);
    }
    if config.ops.contains(&AugmentOp::CutPaste) && config.modes.is_empty() {
        return Err(AugmentError::NoModes);
    }
    let program = compile(spec)?;
    let mut samples = Vec::new();
    let mut scenes = BTreeMap::new();
    let mut warnings = Vec::new();

    for sample in cot_set {
        let subquery = program.subquery(&sample.base_subquery_id).ok_or_else(|| {
            AugmentError::UnknownSubquery {
                sample_id: sample.id.clone(),
                subquery_id: sample.base_subquery_id.clone(),
            }
        })?;
        let scene =
            config
                .scenes
                .get(&sample.scene_ref)
                .ok_or_else(|| AugmentError::MissingScene {
                    sample_id: sample.id.clone(),
                    scene_ref: sample.scene_ref.clone(),
                })?;

        let slots: Vec<AugmentOp> = (0..config.multiplicity)
            .map(|m| config.ops[m as usize % config.ops.len()])
            .collect();
        let paraphrase_slots = slots.iter().filter(|op| **op == AugmentOp::Paraphrase).count();
        let texts = if paraphrase_slots > 0 {
            let n = paraphrase_slots.clamp(10, 20);
            if paraphrase_slots > n {
                return Err(AugmentError::BankTooSmall {
                    have: n,
                    need: paraphrase_slots,
                });
            }
            paraphrase_expand(subquery, n, crate::rng::mix(seed, &["texts", &sample.id]))?
        } else {
            Vec::new()
        };

        let mut next_text = 0usize;
        for (m, op) in slots.iter().enumerate() {
            match op {
                AugmentOp::Paraphrase => {
                    // Scene unchanged; gold still re-derived from it.
                    let record = GroundTruth
                        .answer(scene, subquery)
                        .expect("ground truth always answers");
                    samples.push(TrainingSample {
                        id: format!("{}-p{m}", sample.id),
                        base_subquery_id: sample.base_subquery_id.clone(),
                        scene_ref: sample.scene_ref.clone(),
                        gold_answer: record.value,
                        provenance: Provenance::Augmented,
                        question_text: texts[next_text].clone(),
                        cot_text: sample.cot_text.clone(),
                    });
                    next_text += 1;
                }
                AugmentOp::CutPaste => {
                    if scene.objects.is_empty() {
                        warnings.push(format!(
                            "{}-c{m}: scene {} has no objects to edit",
                            sample.id, sample.scene_ref
                        ));
                        continue;
                    }
                    let slot_seed =
                        crate::rng::mix(seed, &["cutpaste", &sample.id, &m.to_string()]);
                    let mut rng = rng_for(slot_seed, &["pick"]);
                    let object_id =
                        scene.objects[rng.random_range(0..scene.objects.len())].id.clone();
                    let mode = config.modes[rng.random_range(0..config.modes.len())];
                    let edited = match cut_paste_capped(
                        scene,
                        &object_id,
                        mode,
                        None,
                        spec,
                        slot_seed,
                        config.iou_cap,
                    ) {
                        Ok(s) => s,
                        Err(e) => {
                            warnings.push(format!("{}-c{m}: {e}", sample.id));
                            continue;
                        }
                    };
                    let new_ref =
                        format!("{}-{}-c{m}", scene.image_ref, sample.id.replace('#', "_"));
                    let mut edited = edited;
                    edited.image_ref = new_ref.clone();
                    let record = GroundTruth
                        .answer(&edited, subquery)
                        .expect("ground truth always answers");
                    samples.push(TrainingSample {
                        id: format!("{}-c{m}", sample.id),
                        base_subquery_id: sample.base_subquery_id.clone(),
                        scene_ref: new_ref.clone(),
                        gold_answer: record.value,
                        provenance: Provenance::Augmented,
                        question_text: sample.question_text.clone(),
                        cot_text: record.cot_text,
                    });
                    scenes.insert(new_ref, edited);
                }
            }
        }
    }

    samples.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(AugmentedSet {
        samples,
        scenes,
        warnings,
    })
}
