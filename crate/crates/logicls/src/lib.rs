//! Logical anomaly classification over structured scene descriptions.
//!
//! An image is abstracted as a [`scene::Scene`]: a set of objects with
//! categories, bounding boxes, and attributes. A scenario's compositional
//! rules live in a small constraint language (`.lcs` files, see
//! [`dsl`]). Constraints compile into atomic subqueries ([`compile`]),
//! each answerable by looking at one aspect of the scene: a count, a
//! spatial relation, a distance, a size ratio, an attribute value, or a
//! pairing slot. A deterministic evaluator ([`eval`]) answers subqueries
//! from geometry alone; pluggable answerers ([`answer`]) substitute noisy
//! or remote models behind the same interface. The aggregator
//! ([`aggregate`]) folds per-subquery outcomes into a set-valued verdict:
//! either `{normal}` or the set of violated anomaly categories.
//!
//! Around that core sit a synthetic scene generator ([`generate`]),
//! set-based F1 metrics ([`metrics`]), difficulty-weighted sampling and a
//! training-dynamics simulator ([`resample`], [`simulate`]), and a
//! CoT-dataset augmentor ([`augment`]).
//!
//! The crate is a library first. Each major capability has a runnable
//! example:
//!
//! ```text
//! cargo run --example parse_and_compile    # DSL round trip + subquery expansion
//! cargo run --example generate_scenes     # synthetic corpus with injected anomalies
//! cargo run --example classify_scene      # end-to-end verdict with evidence
//! cargo run --example noisy_answers       # corrupted answerers, F1 vs noise level
//! cargo run --example evaluate_dataset    # manifest-driven eval report
//! cargo run --example augment_cot         # paraphrase + cut-paste augmentation
//! cargo run --example difficulty_sampling # resampling plans and the trainer sim
//! cargo run --example remote_answerer     # ICL prompts against a toy HTTP server
//! ```
//!
//! A thin `logicls` binary exposes the same operations as subcommands
//! (`validate`, `compile`, `gen-scenes`, `augment`, `classify`, `eval`,
//! `simulate-train`) for shell pipelines; see [`cli`].

pub mod aggregate;
pub mod answer;
pub mod augment;
pub mod cli;
pub mod compile;
pub mod config;
pub mod dsl;
pub mod eval;
pub mod generate;
pub mod geometry;
pub mod manifest;
pub mod metrics;
pub mod resample;
pub mod scene;
pub mod simulate;

mod rng;

pub use aggregate::{classify, ClassifyError, UnanswerablePolicy, Verdict};
pub use compile::{compile, SubqueryProgram};
pub use dsl::{parse, serialize, ScenarioSpec};
pub use scene::{LabelSet, Scene};
