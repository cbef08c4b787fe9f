//! Deterministic subquery evaluation against scene geometry. This is
//! the reference answerer: pure, total, and the oracle every other
//! answerer is measured against. Questions that cannot be answered
//! from the scene (no matching object, missing attribute, empty slot)
//! come back as [`Answer::Unanswerable`] rather than an error.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::compile::{AtomicSubquery, Scope, SubqueryProgram, SubqueryTask};
use crate::dsl::{RelationKind, Selector};
use crate::scene::{ObjectInstance, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerValue {
    Numeric(f64),
    Boolean(bool),
    Categorical(String),
}

impl std::fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AnswerValue::Numeric(n) => write!(f, "{n}"),
            AnswerValue::Boolean(true) => write!(f, "yes"),
            AnswerValue::Boolean(false) => write!(f, "no"),
            AnswerValue::Categorical(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Value(AnswerValue),
    Unanswerable { reason: String },
}

impl Answer {
    pub fn numeric(n: f64) -> Self {
        Answer::Value(AnswerValue::Numeric(n))
    }
    pub fn boolean(b: bool) -> Self {
        Answer::Value(AnswerValue::Boolean(b))
    }
    pub fn categorical(s: impl Into<String>) -> Self {
        Answer::Value(AnswerValue::Categorical(s.into()))
    }
    pub fn unanswerable(reason: impl Into<String>) -> Self {
        Answer::Unanswerable {
            reason: reason.into(),
        }
    }

    pub fn value(&self) -> Option<&AnswerValue> {
        match self {
            Answer::Value(v) => Some(v),
            Answer::Unanswerable { .. } => None,
        }
    }
}

impl std::fmt::Display for Answer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Answer::Value(v) => v.fmt(f),
            Answer::Unanswerable { .. } => write!(f, "unanswerable"),
        }
    }
}

pub fn evaluate_program(scene: &Scene, program: &SubqueryProgram) -> Vec<(String, Answer)> {
    program
        .subqueries
        .iter()
        .map(|sq| (sq.id.clone(), evaluate(scene, sq)))
        .collect()
}

pub fn evaluate(scene: &Scene, sq: &AtomicSubquery) -> Answer {
    match &sq.task {
        SubqueryTask::CountObjects { selector } => {
            let n = select(scene, selector)
                .filter(|o| {
                    let (cx, cy) = o.bbox.center();
                    sq.scope.as_ref().is_none_or(|s| scope_contains(s, cx, cy))
                })
                .count();
            Answer::numeric(n as f64)
        }
        SubqueryTask::CheckRelation { a, b, relation } => match resolve_pair(scene, a, b) {
            Ok((oa, ob)) => Answer::boolean(relation_holds(oa, ob, *relation)),
            Err(reason) => Answer::unanswerable(reason),
        },
        SubqueryTask::CompareDistance { a, b, cmp, threshold } => match resolve_pair(scene, a, b) {
            Ok((oa, ob)) => {
                let d = oa.bbox.center_distance(&ob.bbox);
                Answer::boolean(cmp.apply(d, *threshold))
            }
            Err(reason) => Answer::unanswerable(reason),
        },
        SubqueryTask::CompareSizeRatio { a, b, cmp, threshold } => match resolve_pair(scene, a, b) {
            Ok((oa, ob)) => {
                let denom = ob.bbox.area();
                if denom <= 0.0 {
                    return Answer::unanswerable(format!("'{}' has zero area", ob.id));
                }
                Answer::boolean(cmp.apply(oa.bbox.area() / denom, *threshold))
            }
            Err(reason) => Answer::unanswerable(reason),
        },
        SubqueryTask::ReadAttribute { selector, key, slot } => {
            let mut objs: Vec<&ObjectInstance> = select(scene, selector).collect();
            sort_by_position(&mut objs);
            let Some(obj) = objs.get(*slot as usize) else {
                return Answer::unanswerable(format!(
                    "only {} object(s) match '{selector}', slot {} is empty",
                    objs.len(),
                    slot + 1
                ));
            };
            match obj.attr(key) {
                Some(v) => Answer::categorical(v),
                None => Answer::unanswerable(format!("object '{}' has no attribute '{key}'", obj.id)),
            }
        }
        SubqueryTask::PairingCountsMatch { a, b } => {
            let na = select(scene, a).count();
            let nb = select(scene, b).count();
            Answer::boolean(na == nb)
        }
        SubqueryTask::PairingSlotMatch {
            a,
            b,
            by_key,
            order_by,
            slot,
        } => {
            let mut side_a: Vec<&ObjectInstance> = select(scene, a).collect();
            let mut side_b: Vec<&ObjectInstance> = select(scene, b).collect();
            sort_for_pairing(&mut side_a, order_by.as_deref());
            sort_for_pairing(&mut side_b, order_by.as_deref());
            let i = *slot as usize;
            let (Some(oa), Some(ob)) = (side_a.get(i), side_b.get(i)) else {
                return Answer::unanswerable(format!(
                    "pair slot {} is empty ({} x {} matches)",
                    slot + 1,
                    side_a.len(),
                    side_b.len()
                ));
            };
            match (oa.attr(by_key), ob.attr(by_key)) {
                (Some(ka), Some(kb)) => Answer::boolean(ka == kb),
                (None, _) => Answer::unanswerable(format!("object '{}' has no attribute '{by_key}'", oa.id)),
                (_, None) => Answer::unanswerable(format!("object '{}' has no attribute '{by_key}'", ob.id)),
            }
        }
    }
}

fn select<'a>(scene: &'a Scene, selector: &'a Selector) -> impl Iterator<Item = &'a ObjectInstance> {
    scene.objects.iter().filter(move |o| selector.matches(o))
}

/// Counting scope test on an object's center. Grid cells are half-open
/// on interior edges so a center on a shared boundary lands in exactly
/// one cell; outer edges (and plain regions) are closed.
fn scope_contains(scope: &Scope, cx: f64, cy: f64) -> bool {
    match scope {
        Scope::Region { rect, .. } => rect.contains_point(cx, cy),
        Scope::Cell {
            rect,
            last_row,
            last_col,
            ..
        } => {
            let x_hi = if *last_col { cx <= rect.x2() } else { cx < rect.x2() };
            let y_hi = if *last_row { cy <= rect.y2() } else { cy < rect.y2() };
            cx >= rect.x1() && x_hi && cy >= rect.y1() && y_hi
        }
        Scope::Slot(_) => true,
    }
}

/// Picks the referent when a selector matches several objects: the one
/// whose center is nearest the canvas center, ties broken by smallest
/// id. Deterministic for any scene.
fn resolve_single<'a>(scene: &'a Scene, selector: &Selector) -> Result<&'a ObjectInstance, String> {
    let (mx, my) = (scene.width / 2.0, scene.height / 2.0);
    let mut best: Option<(&ObjectInstance, f64)> = None;
    for obj in scene.objects.iter().filter(|o| selector.matches(o)) {
        let (cx, cy) = obj.bbox.center();
        let d2 = (cx - mx).powi(2) + (cy - my).powi(2);
        best = match best {
            None => Some((obj, d2)),
            Some((cur, cur_d2)) => {
                if d2 < cur_d2 || (d2 == cur_d2 && obj.id < cur.id) {
                    Some((obj, d2))
                } else {
                    Some((cur, cur_d2))
                }
            }
        };
    }
    best.map(|(o, _)| o)
        .ok_or_else(|| format!("no object matches '{selector}'"))
}

fn resolve_pair<'a>(
    scene: &'a Scene,
    a: &Selector,
    b: &Selector,
) -> Result<(&'a ObjectInstance, &'a ObjectInstance), String> {
    Ok((resolve_single(scene, a)?, resolve_single(scene, b)?))
}

fn relation_holds(a: &ObjectInstance, b: &ObjectInstance, relation: RelationKind) -> bool {
    let (ax, ay) = a.bbox.center();
    let (bx, by) = b.bbox.center();
    match relation {
        RelationKind::LeftOf => ax < bx,
        RelationKind::RightOf => ax > bx,
        // y grows downward: above means smaller center y.
        RelationKind::Above => ay < by,
        RelationKind::Below => ay > by,
        RelationKind::Inside => b.bbox.contains_box(&a.bbox),
        RelationKind::Overlaps => a.bbox.overlaps(&b.bbox),
    }
}

/// Reading order: top to bottom, then left to right, then id.
fn sort_by_position(objs: &mut [&ObjectInstance]) {
    objs.sort_by(|a, b| {
        let (ax, ay) = a.bbox.center();
        let (bx, by) = b.bbox.center();
        ay.partial_cmp(&by)
            .unwrap_or(Ordering::Equal)
            .then(ax.partial_cmp(&bx).unwrap_or(Ordering::Equal))
            .then_with(|| a.id.cmp(&b.id))
    });
}

/// Pair alignment order. With an `order_by` key, objects carrying the
/// key come first, sorted by its value (numerically when both sides
/// parse as finite numbers, else lexically); objects missing the key
/// trail in reading order. Without a key it is plain reading order.
fn sort_for_pairing(objs: &mut Vec<&ObjectInstance>, order_by: Option<&str>) {
    let Some(key) = order_by else {
        sort_by_position(objs);
        return;
    };
    sort_by_position(objs);
    objs.sort_by(|a, b| match (a.attr(key), b.attr(key)) {
        (Some(va), Some(vb)) => order_value_cmp(va, vb),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
}

fn order_value_cmp(a: &str, b: &str) -> Ordering {
    let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
    match (num(a), num(b)) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}
