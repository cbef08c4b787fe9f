//! HTTP answer provider. Speaks a one-shot ICL wire format: each
//! request carries the system prompt, one solved exemplar, and the
//! test image reference; the response text carries tagged reasoning
//! and answer spans.
//!
//! Also hosts the whole-constraint baseline: instead of decomposed
//! subqueries, one yes/no question per constraint goes to the remote
//! side. It exists to compare against decomposition with the same
//! provider, and it trades away the per-check evidence trail.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::icl::{render_icl_prompt, system_prompt, user_prompt};
use super::tags::{parse_tagged_response, render_tagged};
use super::{AnswerError, AnswerRecord, Answerer, GroundTruth};
use crate::aggregate::{check_holds, CheckOutcome, ClassifyError, EvidenceItem, Verdict};
use crate::compile::{compile, describe_rule, AnswerType, AtomicSubquery, CheckSpec};
use crate::dsl::ScenarioSpec;
use crate::eval::{evaluate, Answer, AnswerValue};
use crate::scene::{LabelSet, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub timeout_ms: u64,
    /// Extra attempts after the first, on transport failures only.
    pub retries: u32,
    /// Bound on concurrent in-flight requests.
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            timeout_ms: 10_000,
            retries: 2,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    system_prompt: &'a str,
    subquery: &'a str,
    exemplar: WireExemplar<'a>,
    test_image_ref: &'a str,
}

#[derive(Serialize)]
struct WireExemplar<'a> {
    image_ref: &'a str,
    output: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
    /// Optional: remote sides that track model uncertainty may report
    /// it; absent means 1.
    #[serde(default)]
    perplexity: Option<f64>,
}

/// Counting semaphore. `std::sync` has no semaphore and pulling in an
/// async runtime for one bound is not worth it.
struct Gate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.freed.wait(permits).unwrap();
        }
        *permits -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().unwrap() += 1;
        self.gate.freed.notify_one();
    }
}

pub struct RemoteAnswerer {
    agent: ureq::Agent,
    endpoint: String,
    /// Solved train scene the one-shot exemplars are drawn from.
    exemplar_scene: Scene,
    config: RemoteConfig,
    gate: Gate,
}

impl RemoteAnswerer {
    pub fn new(base_url: &str, exemplar_scene: Scene, config: RemoteConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build();
        RemoteAnswerer {
            agent: ureq::Agent::new_with_config(agent_config),
            endpoint: format!("{}/answer", base_url.trim_end_matches('/')),
            exemplar_scene,
            gate: Gate::new(config.max_in_flight),
            config,
        }
    }

    pub fn exemplar_scene(&self) -> &Scene {
        &self.exemplar_scene
    }

    /// One wire round trip: send the prompt parts, get tagged text
    /// back, coerce to `answer_type`. Returns (cot, value, perplexity).
    pub fn ask(
        &self,
        question: &str,
        answer_type: &AnswerType,
        exemplar_output: &str,
        test_image_ref: &str,
    ) -> Result<(String, AnswerValue, f64), AnswerError> {
        let system = system_prompt();
        let user = user_prompt(question);
        let request = WireRequest {
            system_prompt: &system,
            subquery: &user,
            exemplar: WireExemplar {
                image_ref: &self.exemplar_scene.image_ref,
                output: exemplar_output,
            },
            test_image_ref,
        };
        let response = self.post(&request)?;
        let perplexity = match response.perplexity {
            None => 1.0,
            Some(p) if p.is_finite() && p >= 1.0 => p,
            Some(p) => {
                return Err(AnswerError::Protocol(format!(
                    "reported perplexity {p} is not a finite value >= 1"
                )))
            }
        };
        let (cot, value) = parse_tagged_response(&response.text, answer_type)?;
        Ok((cot, value, perplexity))
    }

    fn post(&self, request: &WireRequest<'_>) -> Result<WireResponse, AnswerError> {
        let _slot = self.gate.enter();
        let attempts = self.config.retries + 1;
        let mut last_transport = String::new();
        for attempt in 1..=attempts {
            match self.agent.post(&self.endpoint).send_json(request) {
                Ok(mut response) => {
                    return response
                        .body_mut()
                        .read_json::<WireResponse>()
                        .map_err(|e| AnswerError::Protocol(format!("bad response body: {e}")));
                }
                Err(e) if is_transport(&e) => {
                    last_transport = e.to_string();
                    if attempt == attempts {
                        return Err(AnswerError::Transport {
                            attempts,
                            message: last_transport,
                        });
                    }
                }
                Err(ureq::Error::StatusCode(code)) => {
                    return Err(AnswerError::Protocol(format!(
                        "server returned HTTP {code}"
                    )));
                }
                Err(e) => return Err(AnswerError::Protocol(e.to_string())),
            }
        }
        Err(AnswerError::Transport {
            attempts,
            message: last_transport,
        })
    }
}

fn is_transport(e: &ureq::Error) -> bool {
    matches!(
        e,
        ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::HostNotFound
    )
}

impl Answerer for RemoteAnswerer {
    fn answer(&self, scene: &Scene, subquery: &AtomicSubquery) -> Result<AnswerRecord, AnswerError> {
        let exemplar_record = GroundTruth.answer(&self.exemplar_scene, subquery)?;
        let bundle = render_icl_prompt(
            subquery,
            (&self.exemplar_scene.image_ref, &exemplar_record),
            &scene.image_ref,
        );
        let (cot_text, value, perplexity) = self.ask(
            &subquery.question_text,
            &subquery.answer_type,
            &bundle.exemplar_output,
            &scene.image_ref,
        )?;
        Ok(AnswerRecord {
            subquery_id: subquery.id.clone(),
            value: Answer::Value(value),
            cot_text,
            perplexity,
        })
    }

    fn name(&self) -> String {
        format!("remote:{}", self.endpoint)
    }
}

/// Whole-constraint baseline: one yes/no query per constraint, no
/// decomposition. The exemplar answer is derived by checking every
/// expanded subquery of the constraint on the exemplar scene.
pub fn end2end_classify(
    remote: &RemoteAnswerer,
    spec: &ScenarioSpec,
    scene: &Scene,
) -> Result<Verdict, ClassifyError> {
    let program = compile(spec)?;
    let mut evidence = Vec::new();
    let mut labels = std::collections::BTreeSet::new();
    for span in &program.constraint_index {
        let constraint = spec
            .constraint(&span.constraint_id)
            .expect("constraint index refers to spec constraints");
        let question = format!(
            "Here is a rule about the image: {} Is the rule satisfied?",
            describe_rule(&constraint.rule)
        );
        let exemplar_ok = program
            .for_constraint(&span.constraint_id)
            .iter()
            .all(|sq| match evaluate(remote.exemplar_scene(), sq) {
                Answer::Value(v) => check_holds(&sq.check, &v),
                Answer::Unanswerable { .. } => false,
            });
        let exemplar_output = render_tagged(
            "Checked each requirement of the rule against the image.",
            if exemplar_ok { "yes" } else { "no" },
        );
        let (cot_text, value, perplexity) = remote
            .ask(
                &question,
                &AnswerType::Boolean,
                &exemplar_output,
                &scene.image_ref,
            )
            .map_err(|e| ClassifyError::Answer {
                subquery_id: span.constraint_id.clone(),
                source: e,
            })?;
        let satisfied = check_holds(&CheckSpec::BooleanIs(true), &value);
        let outcome = if satisfied {
            CheckOutcome::Satisfied
        } else {
            CheckOutcome::Violated
        };
        if outcome == CheckOutcome::Violated {
            labels.insert(span.violation_category.clone());
        }
        evidence.push(EvidenceItem {
            subquery_id: span.constraint_id.clone(),
            question_text: question,
            answer: AnswerRecord {
                subquery_id: span.constraint_id.clone(),
                value: Answer::Value(value),
                cot_text,
                perplexity,
            },
            outcome,
            violation_category: span.violation_category.clone(),
        });
    }
    let labels = if labels.is_empty() {
        LabelSet::normal()
    } else {
        LabelSet::anomalies(labels.iter().cloned()).expect("categories are not the normal label")
    };
    Ok(Verdict { labels, evidence })
}
