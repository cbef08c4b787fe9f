//! Turns a bag of answers into a final label set with an evidence
//! trail. Aggregation is a pure predicate union: a constraint is
//! violated when any of its subqueries' checks fails, and the verdict
//! collects the violated constraints' categories. No direction
//! inference happens here; a scenario that wants "missing" and
//! "additional" as distinct categories declares two count constraints.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{AnswerError, AnswerRecord, Answerer};
use crate::compile::{compile, AnswerType, CheckSpec, CompileError, SubqueryProgram};
use crate::dsl::ScenarioSpec;
use crate::eval::{Answer, AnswerValue};
use crate::scene::{LabelSet, Scene};

/// What an unanswerable subquery means for its constraint. Strict
/// treats it as a violation (a missing mandated object is itself an
/// anomaly); lenient leaves the constraint's fate to the remaining
/// subqueries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnanswerablePolicy {
    #[default]
    Strict,
    Lenient,
}

impl FromStr for UnanswerablePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(UnanswerablePolicy::Strict),
            "lenient" => Ok(UnanswerablePolicy::Lenient),
            other => Err(format!("unknown policy {other:?}, expected strict or lenient")),
        }
    }
}

impl std::fmt::Display for UnanswerablePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UnanswerablePolicy::Strict => "strict",
            UnanswerablePolicy::Lenient => "lenient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Satisfied,
    Violated,
    Unanswerable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub subquery_id: String,
    pub question_text: String,
    pub answer: AnswerRecord,
    pub outcome: CheckOutcome,
    pub violation_category: String,
}

/// Final call on one scene. Labels are either {normal} or the set of
/// violated constraints' categories; every anomaly label is backed by
/// at least one violated evidence item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub labels: LabelSet,
    pub evidence: Vec<EvidenceItem>,
}

impl Verdict {
    pub fn violated(&self) -> impl Iterator<Item = &EvidenceItem> {
        self.evidence
            .iter()
            .filter(|e| e.outcome == CheckOutcome::Violated)
    }
}

/// One line of a verdict JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub scene: String,
    pub labels: LabelSet,
    pub evidence: Vec<EvidenceItem>,
}

impl VerdictRecord {
    pub fn new(scene: impl Into<String>, verdict: Verdict) -> Self {
        VerdictRecord {
            scene: scene.into(),
            labels: verdict.labels,
            evidence: verdict.evidence,
        }
    }
}

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("no answer for subquery {subquery_id:?}")]
    Missing { subquery_id: String },
    #[error("duplicate answer for subquery {subquery_id:?}")]
    Duplicate { subquery_id: String },
    #[error("answer for unknown subquery {subquery_id:?}")]
    Unknown { subquery_id: String },
    #[error("answer for subquery {subquery_id:?} is {got}, expected {expected}")]
    TypeMismatch {
        subquery_id: String,
        expected: String,
        got: String,
    },
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("answering subquery {subquery_id:?} failed: {source}")]
    Answer {
        subquery_id: String,
        source: AnswerError,
    },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

/// True when the answer value passes the check predicate. A value of
/// the wrong type never passes; aggregation rejects those up front.
pub fn check_holds(check: &CheckSpec, value: &AnswerValue) -> bool {
    match (check, value) {
        (CheckSpec::Numeric { cmp, threshold }, AnswerValue::Numeric(n)) => {
            cmp.apply(*n, *threshold)
        }
        (CheckSpec::BooleanIs(expected), AnswerValue::Boolean(b)) => b == expected,
        (CheckSpec::MemberOf(allowed), AnswerValue::Categorical(s)) => {
            allowed.iter().any(|v| v == s)
        }
        _ => false,
    }
}

fn type_name(t: &AnswerType) -> &'static str {
    match t {
        AnswerType::Numeric => "numeric",
        AnswerType::Boolean => "boolean",
        AnswerType::Categorical(_) => "categorical",
    }
}

fn value_type_name(v: &AnswerValue) -> &'static str {
    match v {
        AnswerValue::Numeric(_) => "numeric",
        AnswerValue::Boolean(_) => "boolean",
        AnswerValue::Categorical(_) => "categorical",
    }
}

fn type_matches(t: &AnswerType, v: &AnswerValue) -> bool {
    matches!(
        (t, v),
        (AnswerType::Numeric, AnswerValue::Numeric(_))
            | (AnswerType::Boolean, AnswerValue::Boolean(_))
            | (AnswerType::Categorical(_), AnswerValue::Categorical(_))
    )
}

/// Union aggregation. Answers may arrive in any order; evidence comes
/// out in program order, one item per subquery.
pub fn aggregate(
    program: &SubqueryProgram,
    answers: &[AnswerRecord],
    policy: UnanswerablePolicy,
) -> Result<Verdict, AggregateError> {
    let known: BTreeMap<&str, usize> = program
        .subqueries
        .iter()
        .enumerate()
        .map(|(i, sq)| (sq.id.as_str(), i))
        .collect();
    let mut by_id: BTreeMap<&str, &AnswerRecord> = BTreeMap::new();
    for record in answers {
        if !known.contains_key(record.subquery_id.as_str()) {
            return Err(AggregateError::Unknown {
                subquery_id: record.subquery_id.clone(),
            });
        }
        if by_id.insert(record.subquery_id.as_str(), record).is_some() {
            return Err(AggregateError::Duplicate {
                subquery_id: record.subquery_id.clone(),
            });
        }
    }

    let mut evidence = Vec::with_capacity(program.subqueries.len());
    let mut labels = std::collections::BTreeSet::new();
    for sq in &program.subqueries {
        let record = *by_id.get(sq.id.as_str()).ok_or_else(|| AggregateError::Missing {
            subquery_id: sq.id.clone(),
        })?;
        let outcome = match &record.value {
            Answer::Value(v) => {
                if !type_matches(&sq.answer_type, v) {
                    return Err(AggregateError::TypeMismatch {
                        subquery_id: sq.id.clone(),
                        expected: type_name(&sq.answer_type).into(),
                        got: value_type_name(v).into(),
                    });
                }
                if check_holds(&sq.check, v) {
                    CheckOutcome::Satisfied
                } else {
                    CheckOutcome::Violated
                }
            }
            Answer::Unanswerable { .. } => match policy {
                UnanswerablePolicy::Strict => CheckOutcome::Violated,
                UnanswerablePolicy::Lenient => CheckOutcome::Unanswerable,
            },
        };
        if outcome == CheckOutcome::Violated {
            labels.insert(sq.violation_category.clone());
        }
        evidence.push(EvidenceItem {
            subquery_id: sq.id.clone(),
            question_text: sq.question_text.clone(),
            answer: record.clone(),
            outcome,
            violation_category: sq.violation_category.clone(),
        });
    }

    let labels = if labels.is_empty() {
        LabelSet::normal()
    } else {
        LabelSet::anomalies(labels).expect("violation categories exclude the normal label")
    };
    Ok(Verdict { labels, evidence })
}

/// Compile, answer every subquery, aggregate.
pub fn classify(
    scene: &Scene,
    spec: &ScenarioSpec,
    provider: &dyn Answerer,
    policy: UnanswerablePolicy,
) -> Result<Verdict, ClassifyError> {
    let program = compile(spec)?;
    classify_with_program(scene, &program, provider, policy)
}

/// [`classify`] against a pre-compiled program, for callers that
/// process many scenes of one scenario.
pub fn classify_with_program(
    scene: &Scene,
    program: &SubqueryProgram,
    provider: &dyn Answerer,
    policy: UnanswerablePolicy,
) -> Result<Verdict, ClassifyError> {
    let mut answers = Vec::with_capacity(program.subqueries.len());
    for sq in &program.subqueries {
        let record = provider
            .answer(scene, sq)
            .map_err(|source| ClassifyError::Answer {
                subquery_id: sq.id.clone(),
                source,
            })?;
        answers.push(record);
    }
    Ok(aggregate(program, &answers, policy)?)
}

pub fn write_verdicts_jsonl(path: &Path, records: &[VerdictRecord]) -> std::io::Result<()> {
    let mut buf = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buf, record)?;
        buf.write_all(b"\n")?;
    }
    crate::scene::atomic_write(path, &buf)
}

pub fn read_verdicts_jsonl(path: &Path) -> std::io::Result<Vec<VerdictRecord>> {
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer::GroundTruth;
    use crate::compile::Scope;
    use crate::dsl::parse;
    use crate::geometry::BBox;
    use crate::scene::ObjectInstance;

    fn grid_spec() -> ScenarioSpec {
        parse(
            r#"scenario "pushpins" {
  classes: pushpin
  region tray = grid(3, 5) over [0, 0, 1500, 900]
  constraint one_per_cell violation="additional_pushpin" count(pushpin) == 1 per tray
}"#,
        )
        .unwrap()
    }

    fn answers_all(program: &SubqueryProgram, n: f64) -> Vec<AnswerRecord> {
        program
            .subqueries
            .iter()
            .map(|sq| AnswerRecord {
                subquery_id: sq.id.clone(),
                value: Answer::numeric(n),
                cot_text: String::new(),
                perplexity: 1.0,
            })
            .collect()
    }

    fn labels_of(verdict: &Verdict) -> Vec<String> {
        verdict.labels.labels().map(str::to_string).collect()
    }

    /// Brute-force reference: scan every answer against its check.
    fn oracle_labels(program: &SubqueryProgram, answers: &[AnswerRecord]) -> Vec<String> {
        let mut out = std::collections::BTreeSet::new();
        for record in answers {
            let sq = program.subquery(&record.subquery_id).unwrap();
            if let Some(v) = record.value.value() {
                if !check_holds(&sq.check, v) {
                    out.insert(sq.violation_category.clone());
                }
            }
        }
        out.into_iter().collect()
    }

    #[test]
    fn all_satisfied_is_normal_with_full_evidence() {
        let program = compile(&grid_spec()).unwrap();
        let answers = answers_all(&program, 1.0);
        let verdict = aggregate(&program, &answers, UnanswerablePolicy::Strict).unwrap();
        assert!(verdict.labels.is_normal());
        assert_eq!(verdict.evidence.len(), program.subqueries.len());
        assert!(verdict
            .evidence
            .iter()
            .all(|e| e.outcome == CheckOutcome::Satisfied));
    }

    #[test]
    fn one_bad_cell_flags_the_category_with_scoped_evidence() {
        let program = compile(&grid_spec()).unwrap();
        let mut answers = answers_all(&program, 1.0);
        let bad = program
            .subqueries
            .iter()
            .position(|sq| {
                matches!(&sq.scope, Some(Scope::Cell { row: 1, col: 2, .. }))
            })
            .unwrap();
        answers[bad].value = Answer::numeric(2.0);
        let verdict = aggregate(&program, &answers, UnanswerablePolicy::Strict).unwrap();
        assert_eq!(labels_of(&verdict), vec!["additional_pushpin"]);
        assert_eq!(oracle_labels(&program, &answers), vec!["additional_pushpin"]);
        let violated: Vec<&EvidenceItem> = verdict.violated().collect();
        assert_eq!(violated.len(), 1);
        assert_eq!(violated[0].subquery_id, program.subqueries[bad].id);
    }

    #[test]
    fn two_violated_constraints_union_their_categories() {
        let spec = parse(
            r#"scenario "s" {
  classes: cap, bottle
  constraint c1 violation="missing_cap" count(cap) == 1
  constraint c2 violation="cap_misplaced" relation(cap, bottle) is above
}"#,
        )
        .unwrap();
        let program = compile(&spec).unwrap();
        let answers = vec![
            AnswerRecord {
                subquery_id: program.subqueries[0].id.clone(),
                value: Answer::numeric(0.0),
                cot_text: String::new(),
                perplexity: 1.0,
            },
            AnswerRecord {
                subquery_id: program.subqueries[1].id.clone(),
                value: Answer::boolean(false),
                cot_text: String::new(),
                perplexity: 1.0,
            },
        ];
        let verdict = aggregate(&program, &answers, UnanswerablePolicy::Strict).unwrap();
        assert_eq!(labels_of(&verdict), vec!["cap_misplaced", "missing_cap"]);
        assert_eq!(oracle_labels(&program, &answers), labels_of(&verdict));
    }

    #[test]
    fn missing_duplicate_unknown_and_mismatched_answers_are_errors() {
        let program = compile(&grid_spec()).unwrap();
        let answers = answers_all(&program, 1.0);

        let short = &answers[1..];
        assert!(matches!(
            aggregate(&program, short, UnanswerablePolicy::Strict),
            Err(AggregateError::Missing { .. })
        ));

        let mut dup = answers.clone();
        dup.push(dup[0].clone());
        assert!(matches!(
            aggregate(&program, &dup, UnanswerablePolicy::Strict),
            Err(AggregateError::Duplicate { .. })
        ));

        let mut unknown = answers.clone();
        unknown[0].subquery_id = "nope#1".into();
        assert!(matches!(
            aggregate(&program, &unknown, UnanswerablePolicy::Strict),
            Err(AggregateError::Unknown { .. })
        ));

        let mut mismatch = answers.clone();
        mismatch[0].value = Answer::boolean(true);
        let err = aggregate(&program, &mismatch, UnanswerablePolicy::Strict).unwrap_err();
        match err {
            AggregateError::TypeMismatch { expected, got, .. } => {
                assert_eq!(expected, "numeric");
                assert_eq!(got, "boolean");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn answer_order_does_not_matter() {
        let program = compile(&grid_spec()).unwrap();
        let mut answers = answers_all(&program, 1.0);
        answers[7].value = Answer::numeric(0.0);
        let forward = aggregate(&program, &answers, UnanswerablePolicy::Strict).unwrap();
        answers.reverse();
        let shuffled = aggregate(&program, &answers, UnanswerablePolicy::Strict).unwrap();
        assert_eq!(forward, shuffled);
    }

    #[test]
    fn corrupting_one_more_answer_never_removes_labels() {
        let spec = parse(
            r#"scenario "s" {
  classes: cap, bottle, label
  constraint c1 violation="bad_count" count(cap) == 1
  constraint c2 violation="cap_misplaced" relation(cap, bottle) is above
  constraint c3 violation="label_count" count(label) >= 1
}"#,
        )
        .unwrap();
        let program = compile(&spec).unwrap();
        let good = vec![
            AnswerRecord {
                subquery_id: program.subqueries[0].id.clone(),
                value: Answer::numeric(1.0),
                cot_text: String::new(),
                perplexity: 1.0,
            },
            AnswerRecord {
                subquery_id: program.subqueries[1].id.clone(),
                value: Answer::boolean(true),
                cot_text: String::new(),
                perplexity: 1.0,
            },
            AnswerRecord {
                subquery_id: program.subqueries[2].id.clone(),
                value: Answer::numeric(3.0),
                cot_text: String::new(),
                perplexity: 1.0,
            },
        ];
        let corrupt = |answers: &mut Vec<AnswerRecord>, i: usize| {
            answers[i].value = match &answers[i].value {
                Answer::Value(AnswerValue::Numeric(_)) => Answer::numeric(-1.0),
                Answer::Value(AnswerValue::Boolean(b)) => Answer::boolean(!b),
                other => other.clone(),
            };
        };
        // Grow the corrupted index set one element at a time; every
        // step must preserve previously earned labels.
        for order in [[0, 1, 2], [2, 0, 1], [1, 2, 0]] {
            let mut answers = good.clone();
            let mut prev: Vec<String> = vec![];
            for &i in &order {
                corrupt(&mut answers, i);
                let verdict =
                    aggregate(&program, &answers, UnanswerablePolicy::Strict).unwrap();
                let now = labels_of(&verdict);
                assert!(
                    prev.iter().all(|l| now.contains(l)),
                    "labels shrank: {prev:?} -> {now:?}"
                );
                prev = now;
            }
            assert_eq!(prev.len(), 3);
        }
    }

    #[test]
    fn unanswerable_is_violation_only_under_strict() {
        let program = compile(&grid_spec()).unwrap();
        let mut answers = answers_all(&program, 1.0);
        answers[3].value = Answer::unanswerable("no such object");
        let strict = aggregate(&program, &answers, UnanswerablePolicy::Strict).unwrap();
        assert_eq!(labels_of(&strict), vec!["additional_pushpin"]);
        assert_eq!(strict.evidence[3].outcome, CheckOutcome::Violated);
        let lenient = aggregate(&program, &answers, UnanswerablePolicy::Lenient).unwrap();
        assert!(lenient.labels.is_normal());
        assert_eq!(lenient.evidence[3].outcome, CheckOutcome::Unanswerable);
    }

    #[test]
    fn classify_closes_the_loop_on_a_ground_truth_scene() {
        let spec = parse(
            r#"scenario "s" {
  classes: cap, bottle
  constraint c1 violation="missing_cap" count(cap) == 1
  constraint c2 violation="cap_misplaced" relation(cap, bottle) is above
}"#,
        )
        .unwrap();
        let scene = Scene::new(
            "s",
            "img_0",
            800.0,
            600.0,
            vec![
                ObjectInstance::new("c", "cap", BBox::around(400.0, 100.0, 40.0, 30.0).unwrap()),
                ObjectInstance::new(
                    "b",
                    "bottle",
                    BBox::around(400.0, 350.0, 120.0, 300.0).unwrap(),
                ),
            ],
            None,
        )
        .unwrap();
        let verdict =
            classify(&scene, &spec, &GroundTruth, UnanswerablePolicy::Strict).unwrap();
        assert!(verdict.labels.is_normal());

        // Remove the cap: the count constraint must fire, and under
        // strict policy the now-unanswerable relation fires too.
        let missing = Scene::new(
            "s",
            "img_1",
            800.0,
            600.0,
            vec![ObjectInstance::new(
                "b",
                "bottle",
                BBox::around(400.0, 350.0, 120.0, 300.0).unwrap(),
            )],
            None,
        )
        .unwrap();
        let verdict =
            classify(&missing, &spec, &GroundTruth, UnanswerablePolicy::Strict).unwrap();
        assert_eq!(labels_of(&verdict), vec!["cap_misplaced", "missing_cap"]);
        let lenient =
            classify(&missing, &spec, &GroundTruth, UnanswerablePolicy::Lenient).unwrap();
        assert_eq!(labels_of(&lenient), vec!["missing_cap"]);
    }

    #[test]
    fn verdict_jsonl_shape_and_roundtrip() {
        let program = compile(&grid_spec()).unwrap();
        let mut answers = answers_all(&program, 1.0);
        answers[0].value = Answer::numeric(0.0);
        let verdict = aggregate(&program, &answers, UnanswerablePolicy::Strict).unwrap();
        let record = VerdictRecord::new("scene_07", verdict);

        let line = serde_json::to_string(&record).unwrap();
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(value["scene"], "scene_07");
        assert!(value["labels"].is_array());
        assert_eq!(value["labels"][0], "additional_pushpin");
        let item = &value["evidence"][0];
        for key in ["subquery_id", "outcome", "answer", "violation_category"] {
            assert!(item.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(item["outcome"], "violated");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verdicts.jsonl");
        write_verdicts_jsonl(&path, std::slice::from_ref(&record)).unwrap();
        let back = read_verdicts_jsonl(&path).unwrap();
        assert_eq!(back, vec![record]);
    }
}
