//! Expansion of constraints into atomic subqueries. Each subquery asks
//! one question about the scene, carries the expected answer type, the
//! check to apply to the answer, and the scope it is bound to. Grid
//! counts expand row-major into one subquery per cell; attribute and
//! pairing rules expand per object slot up to the category's declared
//! `maxcount`.
//!
//! Scopes are baked to concrete rectangles at compile time, so a
//! compiled program can be evaluated, serialized, or shipped without
//! the originating spec.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Comparator, Constraint, RegionShape, RelationKind, Rule, ScenarioSpec, Selector};
use crate::geometry::BBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("scenario '{scenario}' declares no constraints, nothing to compile")]
    Empty { scenario: String },
    #[error("constraint '{constraint_id}': rule expands per '{category}' slot but the scenario declares no maxcount for it")]
    MissingMaxcount {
        constraint_id: String,
        category: String,
    },
    #[error("constraint '{constraint_id}': unknown region '{region}'")]
    UnknownRegion {
        constraint_id: String,
        region: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    Numeric,
    Boolean,
    /// Closed set of admissible values, as declared in the rule.
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckSpec {
    /// Satisfied when `answer cmp threshold` holds.
    Numeric { cmp: Comparator, threshold: f64 },
    /// Satisfied when the boolean answer equals the expectation.
    BooleanIs(bool),
    /// Satisfied when the categorical answer is in the set.
    MemberOf(Vec<String>),
}

/// Coarse skill family a subquery exercises. Noise models and the
/// training simulator key difficulty off this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningKind {
    Counting,
    Direction,
    Distance,
    Size,
    Other,
}

impl ReasoningKind {
    pub const ALL: [ReasoningKind; 5] = [
        ReasoningKind::Counting,
        ReasoningKind::Direction,
        ReasoningKind::Distance,
        ReasoningKind::Size,
        ReasoningKind::Other,
    ];
}

///// Where a subquery looks. `Cell` rectangles tile their grid: interior
/// edges are half-open (a point on a shared edge belongs to the cell
/// after it), outer edges closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Region {
        name: String,
        rect: BBox,
    },
    Cell {
        region: String,
        row: u32,
        col: u32,
        rect: BBox,
        last_row: bool,
        last_col: bool,
    },
    /// Object slot index for per-instance expansions.
    Slot(u32),
}

/// What the evaluator must measure. This is the operational half of a
/// subquery; `answer_type` and `check` describe its interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubqueryTask {
    CountObjects {
        selector: Selector,
    },
    CheckRelation {
        a: Selector,
        b: Selector,
        relation: RelationKind,
    },
    CompareDistance {
        a: Selector,
        b: Selector,
        cmp: Comparator,
        threshold: f64,
    },
    CompareSizeRatio {
        a: Selector,
        b: Selector,
        cmp: Comparator,
        threshold: f64,
    },
    ReadAttribute {
        selector: Selector,
        key: String,
        slot: u32,
    },
    PairingCountsMatch {
        a: Selector,
        b: Selector,
    },
    PairingSlotMatch {
        a: Selector,
        b: Selector,
        by_key: String,
        order_by: Option<String>,
        slot: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicSubquery {
    /// `{constraint_id}#{ordinal}`, ordinal counted within the
    /// constraint's expansion.
    pub id: String,
    pub constraint_id: String,
    pub violation_category: String,
    pub question_text: String,
    pub answer_type: AnswerType,
    pub check: CheckSpec,
    pub task: SubqueryTask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<Scope>,
    pub reasoning_kind: ReasoningKind,
}

/// Index of one constraint's contiguous expansion within a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpan {
    pub constraint_id: String,
    pub violation_category: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubqueryProgram {
    pub scenario: String,
    pub subqueries: Vec<AtomicSubquery>,
    /// Per-constraint grouping, in constraint order.
    pub constraint_index: Vec<ConstraintSpan>,
}

impl SubqueryProgram {
    pub fn subquery(&self, id: &str) -> Option<&AtomicSubquery> {
        self.subqueries.iter().find(|s| s.id == id)
    }

    pub fn for_constraint(&self, constraint_id: &str) -> &[AtomicSubquery] {
        self.constraint_index
            .iter()
            .find(|span| span.constraint_id == constraint_id)
            .map(|span| &self.subqueries[span.start..span.start + span.len])
            .unwrap_or(&[])
    }

    pub fn constraint_ids(&self) -> Vec<&str> {
        self.constraint_index
            .iter()
            .map(|s| s.constraint_id.as_str())
            .collect()
    }
}

pub fn compile(spec: &ScenarioSpec) -> Result<SubqueryProgram, CompileError> {
    if spec.constraints.is_empty() {
        return Err(CompileError::Empty {
            scenario: spec.name.clone(),
        });
    }
    let mut subqueries = Vec::new();
    let mut constraint_index = Vec::new();
    for c in &spec.constraints {
        let start = subqueries.len();
        expand(spec, c, &mut subqueries)?;
        constraint_index.push(ConstraintSpan {
            constraint_id: c.id.clone(),
            violation_category: c.violation_category.clone(),
            start,
            len: subqueries.len() - start,
        });
    }
    Ok(SubqueryProgram {
        scenario: spec.name.clone(),
        subqueries,
        constraint_index,
    })
}

fn expand(
    spec: &ScenarioSpec,
    c: &Constraint,
    out: &mut Vec<AtomicSubquery>,
) -> Result<(), CompileError> {
    let mut ordinal = 0u32;
    let mut push = |question_text: String,
                    answer_type: AnswerType,
                    check: CheckSpec,
                    task: SubqueryTask,
                    scope: Option<Scope>,
                    reasoning_kind: ReasoningKind,
                    out: &mut Vec<AtomicSubquery>| {
        out.push(AtomicSubquery {
            id: format!("{}#{}", c.id, ordinal),
            constraint_id: c.id.clone(),
            violation_category: c.violation_category.clone(),
            question_text,
            answer_type,
            check,
            task,
            scope,
            reasoning_kind,
        });
        ordinal += 1;
    };

    match &c.rule {
        Rule::Count {
            selector,
            cmp,
            threshold,
            region,
        } => {
            let check = CheckSpec::Numeric {
                cmp: *cmp,
                threshold: *threshold as f64,
            };
            let task = SubqueryTask::CountObjects {
                selector: selector.clone(),
            };
            match region {
                None => push(
                    format!("How many {} are in the image?", sel_phrase(selector)),
                    AnswerType::Numeric,
                    check,
                    task,
                    None,
                    ReasoningKind::Counting,
                    out,
                ),
                Some(name) => {
                    let decl = spec.region(name).ok_or_else(|| CompileError::UnknownRegion {
                        constraint_id: c.id.clone(),
                        region: name.clone(),
                    })?;
                    match &decl.shape {
                        RegionShape::Box(rect) => push(
                            format!("How many {} are inside the {} region?", sel_phrase(selector), name),
                            AnswerType::Numeric,
                            check,
                            task,
                            Some(Scope::Region {
                                name: name.clone(),
                                rect: *rect,
                            }),
                            ReasoningKind::Counting,
                            out,
                        ),
                        RegionShape::Grid { rows, cols, over } => {
                            for row in 0..*rows {
                                for col in 0..*cols {
                                    let rect = grid_cell(over, *rows, *cols, row, col);
                                    push(
                                        format!(
                                            "How many {} are inside row {}, column {} of the {} grid?",
                                            sel_phrase(selector),
                                            row + 1,
                                            col + 1,
                                            name
                                        ),
                                        AnswerType::Numeric,
                                        check.clone(),
                                        task.clone(),
                                        Some(Scope::Cell {
                                            region: name.clone(),
                                            row,
                                            col,
                                            rect,
                                            last_row: row == rows - 1,
                                            last_col: col == cols - 1,
                                        }),
                                        ReasoningKind::Counting,
                                        out,
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        Rule::Relation { a, b, relation } => push(
            format!(
                "Is the {} {} the {}? Answer yes or no.",
                sel_phrase(a),
                relation_phrase(*relation),
                sel_phrase(b)
            ),
            AnswerType::Boolean,
            CheckSpec::BooleanIs(true),
            SubqueryTask::CheckRelation {
                a: a.clone(),
                b: b.clone(),
                relation: *relation,
            },
            None,
            ReasoningKind::Direction,
            out,
        ),
        Rule::Distance { a, b, cmp, threshold } => push(
            format!(
                "Is the distance between the {} and the {} {} {} pixels? Answer yes or no.",
                sel_phrase(a),
                sel_phrase(b),
                cmp_phrase(*cmp),
                threshold
            ),
            AnswerType::Boolean,
            CheckSpec::BooleanIs(true),
            SubqueryTask::CompareDistance {
                a: a.clone(),
                b: b.clone(),
                cmp: *cmp,
                threshold: *threshold,
            },
            None,
            ReasoningKind::Distance,
            out,
        ),
        Rule::SizeRatio { a, b, cmp, threshold } => push(
            format!(
                "Is the area of the {} {} {} times the area of the {}? Answer yes or no.",
                sel_phrase(a),
                cmp_phrase(*cmp),
                threshold,
                sel_phrase(b)
            ),
            AnswerType::Boolean,
            CheckSpec::BooleanIs(true),
            SubqueryTask::CompareSizeRatio {
                a: a.clone(),
                b: b.clone(),
                cmp: *cmp,
                threshold: *threshold,
            },
            None,
            ReasoningKind::Size,
            out,
        ),
        Rule::AttributeIn { selector, key, allowed } => {
            let bound = slot_bound(spec, c, &selector.category)?;
            for slot in 0..bound {
                push(
                    format!(
                        "What is the {} of {} number {} in top-to-bottom, left-to-right order?",
                        key,
                        sel_phrase(selector),
                        slot + 1
                    ),
                    AnswerType::Categorical(allowed.clone()),
                    CheckSpec::MemberOf(allowed.clone()),
                    SubqueryTask::ReadAttribute {
                        selector: selector.clone(),
                        key: key.clone(),
                        slot,
                    },
                    Some(Scope::Slot(slot)),
                    ReasoningKind::Other,
                    out,
                );
            }
        }
        Rule::Pairing { a, b, by_key, order_by } => {
            let bound = slot_bound(spec, c, &a.category)?;
            push(
                format!(
                    "Are there exactly as many {} as {} in the image? Answer yes or no.",
                    sel_phrase(a),
                    sel_phrase(b)
                ),
                AnswerType::Boolean,
                CheckSpec::BooleanIs(true),
                SubqueryTask::PairingCountsMatch {
                    a: a.clone(),
                    b: b.clone(),
                },
                None,
                ReasoningKind::Counting,
                out,
            );
            for slot in 0..bound {
                let order_phrase = match order_by {
                    Some(k) => format!("ordered by {k}"),
                    None => "in top-to-bottom, left-to-right order".to_string(),
                };
                push(
                    format!(
                        "Do {} number {} and {} number {} ({}) have the same {}? Answer yes or no.",
                        sel_phrase(a),
                        slot + 1,
                        sel_phrase(b),
                        slot + 1,
                        order_phrase,
                        by_key
                    ),
                    AnswerType::Boolean,
                    CheckSpec::BooleanIs(true),
                    SubqueryTask::PairingSlotMatch {
                        a: a.clone(),
                        b: b.clone(),
                        by_key: by_key.clone(),
                        order_by: order_by.clone(),
                        slot,
                    },
                    Some(Scope::Slot(slot)),
                    ReasoningKind::Other,
                    out,
                );
            }
        }
    }
    Ok(())
}

fn slot_bound(spec: &ScenarioSpec, c: &Constraint, category: &str) -> Result<u32, CompileError> {
    spec.maxcounts
        .get(category)
        .copied()
        .ok_or_else(|| CompileError::MissingMaxcount {
            constraint_id: c.id.clone(),
            category: category.to_string(),
        })
}

/// Cell (row, col) of an R x C grid over `over`, row-major. Edges are
/// computed by linear interpolation so adjacent cells share an exact
/// boundary value.
pub fn grid_cell(over: &BBox, rows: u32, cols: u32, row: u32, col: u32) -> BBox {
    let lerp = |lo: f64, hi: f64, i: u32, n: u32| lo + (hi - lo) * (i as f64) / (n as f64);
    let x_lo = lerp(over.x1(), over.x2(), col, cols);
    let x_hi = if col + 1 == cols {
        over.x2()
    } else {
        lerp(over.x1(), over.x2(), col + 1, cols)
    };
    let y_lo = lerp(over.y1(), over.y2(), row, rows);
    let y_hi = if row + 1 == rows {
        over.y2()
    } else {
        lerp(over.y1(), over.y2(), row + 1, rows)
    };
    BBox::new(x_lo, y_lo, x_hi, y_hi).expect("grid cells of a valid box are valid")
}

pub(crate) fn sel_phrase(s: &Selector) -> String {
    match &s.filter {
        None => s.category.clone(),
        Some(f) => format!("{} with {}={}", s.category, f.key, f.value),
    }
}

pub(crate) fn relation_phrase(r: RelationKind) -> &'static str {
    match r {
        RelationKind::LeftOf => "to the left of",
        RelationKind::RightOf => "to the right of",
        RelationKind::Above => "above",
        RelationKind::Below => "below",
        RelationKind::Inside => "fully inside",
        RelationKind::Overlaps => "overlapping",
    }
}

pub(crate) fn cmp_phrase(c: Comparator) -> &'static str {
    match c {
        Comparator::Eq => "exactly",
        Comparator::Ne => "different from",
        Comparator::Lt => "less than",
        Comparator::Le => "at most",
        Comparator::Gt => "greater than",
        Comparator::Ge => "at least",
    }
}

/// One-line natural language rendering of a whole constraint, used by
/// the single-query classification mode.
pub fn describe_rule(rule: &Rule) -> String {
    match rule {
        Rule::Count {
            selector,
            cmp,
            threshold,
            region,
        } => {
            let where_clause = match region {
                Some(r) => format!(" in every part of the {r} region"),
                None => String::new(),
            };
            format!(
                "the number of {}{} must be {} {}",
                sel_phrase(selector),
                where_clause,
                cmp_phrase(*cmp),
                threshold
            )
        }
        Rule::Relation { a, b, relation } => format!(
            "the {} must be {} the {}",
            sel_phrase(a),
            relation_phrase(*relation),
            sel_phrase(b)
        ),
        Rule::Distance { a, b, cmp, threshold } => format!(
            "the distance between the {} and the {} must be {} {} pixels",
            sel_phrase(a),
            sel_phrase(b),
            cmp_phrase(*cmp),
            threshold
        ),
        Rule::SizeRatio { a, b, cmp, threshold } => format!(
            "the area of the {} must be {} {} times the area of the {}",
            sel_phrase(a),
            cmp_phrase(*cmp),
            threshold,
            sel_phrase(b)
        ),
        Rule::AttributeIn { selector, key, allowed } => format!(
            "every {} must have {} in {{{}}}",
            sel_phrase(selector),
            key,
            allowed.join(", ")
        ),
        Rule::Pairing { a, b, by_key, .. } => format!(
            "each {} must pair with one {} sharing the same {}",
            sel_phrase(a),
            sel_phrase(b),
            by_key
        ),
    }
}
