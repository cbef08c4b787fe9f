//! Scoring. Binary F1 collapses every anomaly category into one
//! positive class; macro F1 averages per-category multi-label presence
//! F1. Classes that never occur in gold and are never predicted are
//! excluded from the macro mean and reported, not silently averaged
//! as zeros.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{classify_with_program, ClassifyError, UnanswerablePolicy};
use crate::answer::Answerer;
use crate::compile::compile;
use crate::dsl::ScenarioSpec;
use crate::manifest::DatasetManifest;
use crate::scene::{load_scene, LabelSet, SceneError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no prediction pairs to score")]
    EmptyInput,
    #[error("every class was excluded, nothing to average")]
    EmptyClassSet,
    #[error("test scene {scene:?} has no gold labels")]
    MissingGold { scene: String },
    #[error("manifest scenario {scenario:?} has no constraint spec")]
    MissingSpec { scenario: String },
    #[error("manifest scenario {scenario:?} lists no test files")]
    MissingFileList { scenario: String },
    #[error("scene {scene:?} belongs to scenario {found:?}, expected {expected:?}")]
    ScenarioMismatch {
        scene: String,
        found: String,
        expected: String,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Compile(#[from] crate::compile::CompileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub score: f64,
    pub per_class: Vec<ClassScore>,
    /// Classes with zero gold and zero predicted occurrences, left
    /// out of the mean.
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub scenes: usize,
    pub binary_f1: f64,
    pub binary_counts: BinaryCounts,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScore>,
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenarios: Vec<ScenarioReport>,
    /// Unweighted means over scenarios.
    pub average_binary_f1: f64,
    pub average_macro_f1: f64,
}

fn f1_from(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

fn ratio(num: u64, denom: u64) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

pub fn binary_counts(pairs: &[(LabelSet, LabelSet)]) -> BinaryCounts {
    let mut counts = BinaryCounts::default();
    for (gold, pred) in pairs {
        match (!gold.is_normal(), !pred.is_normal()) {
            (true, true) => counts.tp += 1,
            (false, true) => counts.fp += 1,
            (true, false) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    counts
}

/// Anomalous-vs-normal F1. Positive class is "any anomaly".
pub fn binary_f1(pairs: &[(LabelSet, LabelSet)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let c = binary_counts(pairs);
    Ok(f1_from(c.tp, c.fp, c.fn_))
}

/// Per-class presence F1, averaged unweighted over classes that occur
/// at least once in gold or predictions.
pub fn macro_f1(
    pairs: &[(LabelSet, LabelSet)],
    classes: &[String],
) -> Result<MacroScores, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut per_class = Vec::new();
    let mut excluded = Vec::new();
    for class in classes {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (gold, pred) in pairs {
            match (gold.contains(class), pred.contains(class)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        if tp + fp + fn_ == 0 {
            excluded.push(class.clone());
            continue;
        }
        per_class.push(ClassScore {
            class: class.clone(),
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: f1_from(tp, fp, fn_),
        });
    }
    if per_class.is_empty() {
        return Err(MetricsError::EmptyClassSet);
    }
    let score = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;
    Ok(MacroScores {
        score,
        per_class,
        excluded,
    })
}

/// Both metrics for one scenario's (gold, predicted) pairs.
pub fn score_pairs(
    scenario: &str,
    pairs: &[(LabelSet, LabelSet)],
    classes: &[String],
) -> Result<ScenarioReport, MetricsError> {
    let binary = binary_f1(pairs)?;
    let macros = macro_f1(pairs, classes)?;
    Ok(ScenarioReport {
        scenario: scenario.to_string(),
        scenes: pairs.len(),
        binary_f1: binary,
        binary_counts: binary_counts(pairs),
        macro_f1: macros.score,
        per_class: macros.per_class,
        excluded: macros.excluded,
    })
}

pub fn assemble_report(mut scenarios: Vec<ScenarioReport>) -> Result<EvalReport, MetricsError> {
    if scenarios.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    scenarios.sort_by(|a, b| a.scenario.cmp(&b.scenario));
    let n = scenarios.len() as f64;
    let average_binary_f1 = scenarios.iter().map(|s| s.binary_f1).sum::<f64>() / n;
    let average_macro_f1 = scenarios.iter().map(|s| s.macro_f1).sum::<f64>() / n;
    Ok(EvalReport {
        scenarios,
        average_binary_f1,
        average_macro_f1,
    })
}

/// Classifies every test-split scene of every manifest scenario and
/// scores the predictions against gold labels.
pub fn evaluate_dataset(
    base_dir: &Path,
    manifest: &DatasetManifest,
    specs: &BTreeMap<String, ScenarioSpec>,
    provider: &dyn Answerer,
    policy: UnanswerablePolicy,
) -> Result<EvalReport, MetricsError> {
    let mut scenario_reports = Vec::new();
    for entry in &manifest.scenarios {
        let spec = specs
            .get(&entry.name)
            .ok_or_else(|| MetricsError::MissingSpec {
                scenario: entry.name.clone(),
            })?;
        let files = entry
            .test_files
            .as_ref()
            .ok_or_else(|| MetricsError::MissingFileList {
                scenario: entry.name.clone(),
            })?;
        let mut paths: Vec<&String> = Vec::new();
        paths.extend(&files.normal);
        paths.extend(&files.single_anomaly);
        paths.extend(&files.multi_anomaly);
        if paths.is_empty() {
            return Err(MetricsError::MissingFileList {
                scenario: entry.name.clone(),
            });
        }
        let program = compile(spec)?;
        let pairs: Vec<(LabelSet, LabelSet)> = paths
            .par_iter()
            .map(|rel| -> Result<(LabelSet, LabelSet), MetricsError> {
                let scene = load_scene(&base_dir.join(rel.as_str()))?;
                if scene.scenario != entry.name {
                    return Err(MetricsError::ScenarioMismatch {
                        scene: scene.image_ref.clone(),
                        found: scene.scenario.clone(),
                        expected: entry.name.clone(),
                    });
                }
                let gold = scene
                    .gold_labels
                    .clone()
                    .ok_or_else(|| MetricsError::MissingGold {
                        scene: scene.image_ref.clone(),
                    })?;
                let verdict = classify_with_program(&scene, &program, provider, policy)?;
                Ok((gold, verdict.labels))
            })
            .collect::<Result<_, _>>()?;
        scenario_reports.push(score_pairs(&entry.name, &pairs, &spec.violation_categories())?);
    }
    assemble_report(scenario_reports)
}

impl EvalReport {
    /// Fixed-width grid: one row per scenario, binary and macro
    /// columns, unweighted Average row last.
    pub fn table(&self) -> String {
        let name_width = self
            .scenarios
            .iter()
            .map(|s| s.scenario.len())
            .chain(["Average".len()])
            .max()
            .unwrap_or(8)
            .max("Scenario".len());
        let mut out = String::new();
        out.push_str(&format!(
            "{:<name_width$}  {:>9}  {:>8}  {:>6}\n",
            "Scenario", "Binary F1", "Macro F1", "Scenes"
        ));
        for s in &self.scenarios {
            out.push_str(&format!(
                "{:<name_width$}  {:>9.3}  {:>8.3}  {:>6}\n",
                s.scenario, s.binary_f1, s.macro_f1, s.scenes
            ));
            for class in &s.excluded {
                out.push_str(&format!(
                    "{:<name_width$}  excluded class: {class} (never gold, never predicted)\n",
                    ""
                ));
            }
        }
        out.push_str(&format!(
            "{:<name_width$}  {:>9.3}  {:>8.3}\n",
            "Average", self.average_binary_f1, self.average_macro_f1
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::LabelSet;

    fn normal() -> LabelSet {
        LabelSet::normal()
    }

    fn anom(labels: &[&str]) -> LabelSet {
        LabelSet::anomalies(labels.iter().copied()).unwrap()
    }

    #[test]
    fn binary_f1_hand_example() {
        // TP=2, FP=1, FN=1 -> 2*2 / (4+1+1).
        let pairs = vec![
            (anom(&["a"]), anom(&["a"])),
            (anom(&["b"]), anom(&["a"])),
            (normal(), anom(&["a"])),
            (anom(&["a"]), normal()),
            (normal(), normal()),
        ];
        let f1 = binary_f1(&pairs).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-9, "{f1}");
        let c = binary_counts(&pairs);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 1, 1, 1));
    }

    #[test]
    fn perfect_predictions_score_one() {
        let pairs = vec![
            (normal(), normal()),
            (anom(&["a"]), anom(&["a"])),
            (anom(&["a", "b"]), anom(&["a", "b"])),
        ];
        assert_eq!(binary_f1(&pairs).unwrap(), 1.0);
        let m = macro_f1(&pairs, &["a".into(), "b".into()]).unwrap();
        assert_eq!(m.score, 1.0);
        assert!(m.excluded.is_empty());
    }

    #[test]
    fn always_normal_predictor_scores_zero_binary() {
        let pairs = vec![
            (anom(&["a"]), normal()),
            (normal(), normal()),
            (anom(&["b"]), normal()),
        ];
        assert_eq!(binary_f1(&pairs).unwrap(), 0.0);
    }

    #[test]
    fn macro_mean_of_one_and_half_is_three_quarters() {
        // Class a perfect (f1 1.0); class b tp=1 fp=1 fn=1 (f1 0.5).
        let pairs = vec![
            (anom(&["a"]), anom(&["a"])),
            (anom(&["b"]), anom(&["b"])),
            (anom(&["b"]), normal()),
            (normal(), anom(&["b"])),
        ];
        let m = macro_f1(&pairs, &["a".into(), "b".into()]).unwrap();
        assert!((m.score - 0.75).abs() < 1e-12, "{}", m.score);
        assert_eq!(m.per_class[0].f1, 1.0);
        assert_eq!(m.per_class[1].f1, 0.5);
    }

    #[test]
    fn absent_class_is_excluded_and_reported() {
        let pairs = vec![(anom(&["a"]), anom(&["a"])), (normal(), normal())];
        let m = macro_f1(&pairs, &["a".into(), "ghost".into()]).unwrap();
        assert_eq!(m.score, 1.0);
        assert_eq!(m.excluded, vec!["ghost"]);
        assert_eq!(m.per_class.len(), 1);
    }

    #[test]
    fn empty_inputs_and_empty_class_sets_error() {
        assert!(matches!(binary_f1(&[]), Err(MetricsError::EmptyInput)));
        let pairs = vec![(normal(), normal())];
        assert!(matches!(
            macro_f1(&pairs, &["a".into()]),
            Err(MetricsError::EmptyClassSet)
        ));
    }

    /// Independent confusion counter, written as directly as possible.
    fn brute_force(
        pairs: &[(LabelSet, LabelSet)],
        classes: &[String],
    ) -> (f64, Option<f64>) {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for (g, p) in pairs {
            let g_pos = !g.is_normal();
            let p_pos = !p.is_normal();
            if g_pos && p_pos {
                tp += 1;
            }
            if !g_pos && p_pos {
                fp += 1;
            }
            if g_pos && !p_pos {
                fn_ += 1;
            }
        }
        let binary = if 2 * tp + fp + fn_ == 0 {
            0.0
        } else {
            (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
        };
        let mut f1s = Vec::new();
        for c in classes {
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fn_ = 0u64;
            for (g, p) in pairs {
                if g.contains(c) && p.contains(c) {
                    tp += 1;
                }
                if !g.contains(c) && p.contains(c) {
                    fp += 1;
                }
                if g.contains(c) && !p.contains(c) {
                    fn_ += 1;
                }
            }
            if tp + fp + fn_ > 0 {
                let f1 = if 2 * tp + fp + fn_ == 0 {
                    0.0
                } else {
                    (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
                };
                f1s.push(f1);
            }
        }
        let macro_score = if f1s.is_empty() {
            None
        } else {
            Some(f1s.iter().sum::<f64>() / f1s.len() as f64)
        };
        (binary, macro_score)
    }

    fn random_label_set(rng: &mut rand_chacha::ChaCha8Rng, classes: &[String]) -> LabelSet {
        use rand::Rng;
        if rng.random::<f64>() < 0.4 {
            return normal();
        }
        let mut picked: Vec<String> = classes
            .iter()
            .filter(|_| rng.random::<f64>() < 0.5)
            .cloned()
            .collect();
        if picked.is_empty() {
            picked.push(classes[rng.random_range(0..classes.len())].clone());
        }
        LabelSet::anomalies(picked).unwrap()
    }

    #[test]
    fn oracle_equivalence_on_random_corpora() {
        use rand::Rng;
        let classes: Vec<String> =
            ["c1", "c2", "c3", "c4"].iter().map(|s| s.to_string()).collect();
        for trial in 0..100u64 {
            let mut rng = crate::rng::rng_for(trial, &["metrics-oracle"]);
            let n = rng.random_range(1..=50);
            let pairs: Vec<(LabelSet, LabelSet)> = (0..n)
                .map(|_| {
                    (
                        random_label_set(&mut rng, &classes),
                        random_label_set(&mut rng, &classes),
                    )
                })
                .collect();
            let (oracle_binary, oracle_macro) = brute_force(&pairs, &classes);
            let binary = binary_f1(&pairs).unwrap();
            assert_eq!(binary.to_bits(), oracle_binary.to_bits(), "trial {trial}");
            match (macro_f1(&pairs, &classes), oracle_macro) {
                (Ok(m), Some(o)) => {
                    assert_eq!(m.score.to_bits(), o.to_bits(), "trial {trial}")
                }
                (Err(MetricsError::EmptyClassSet), None) => {}
                (got, want) => panic!("trial {trial}: {got:?} vs {want:?}"),
            }
        }
    }

    #[test]
    fn permuting_pairs_changes_nothing() {
        let pairs = vec![
            (anom(&["a"]), anom(&["b"])),
            (normal(), anom(&["a"])),
            (anom(&["b"]), anom(&["b"])),
            (anom(&["a", "b"]), normal()),
        ];
        let classes = vec!["a".to_string(), "b".to_string()];
        let b1 = binary_f1(&pairs).unwrap();
        let m1 = macro_f1(&pairs, &classes).unwrap().score;
        let mut reversed = pairs.clone();
        reversed.reverse();
        assert_eq!(binary_f1(&reversed).unwrap().to_bits(), b1.to_bits());
        assert_eq!(
            macro_f1(&reversed, &classes).unwrap().score.to_bits(),
            m1.to_bits()
        );
    }

    #[test]
    fn averages_are_unweighted() {
        let a = ScenarioReport {
            scenario: "a".into(),
            scenes: 100,
            binary_f1: 1.0,
            binary_counts: BinaryCounts::default(),
            macro_f1: 1.0,
            per_class: vec![],
            excluded: vec![],
        };
        let b = ScenarioReport {
            scenario: "b".into(),
            scenes: 2,
            binary_f1: 0.5,
            binary_counts: BinaryCounts::default(),
            macro_f1: 0.0,
            per_class: vec![],
            excluded: vec![],
        };
        let report = assemble_report(vec![a, b]).unwrap();
        assert_eq!(report.average_binary_f1, 0.75);
        assert_eq!(report.average_macro_f1, 0.5);
        assert!(report.table().contains("Average"));
    }

    #[test]
    fn dataset_closed_loop_is_perfect() {
        use crate::generate::{generate_corpus, write_corpus, CorpusProfile};
        let spec = crate::dsl::parse(
            r#"scenario "pins" {
  classes: pin
  region tray = grid(2, 2) over [0, 0, 800, 800]
  constraint missing violation="missing_pin" count(pin) >= 1 per tray
  constraint extra violation="extra_pin" count(pin) <= 1 per tray
}"#,
        )
        .unwrap();
        let corpus = generate_corpus(
            &spec,
            &CorpusProfile {
                train_normal: 1,
                train_single: 1,
                test_normal: 3,
                test_single: 4,
                test_multi: 1,
            },
            11,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(dir.path(), &spec, &corpus).unwrap();
        let mut specs = BTreeMap::new();
        specs.insert("pins".to_string(), spec);
        let report = evaluate_dataset(
            dir.path(),
            &manifest,
            &specs,
            &crate::answer::GroundTruth,
            UnanswerablePolicy::Strict,
        )
        .unwrap();
        assert_eq!(report.scenarios[0].scenes, 8);
        assert_eq!(report.average_binary_f1, 1.0);
        assert_eq!(report.average_macro_f1, 1.0);
    }
}
