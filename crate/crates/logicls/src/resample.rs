//! Difficulty scoring and difficulty-proportional group sampling.
//! A sample's difficulty is `alpha * [incorrect] + beta * perplexity`;
//! groups (one per base subquery) are drawn with probability
//! proportional to their summed difficulty raised to `gamma`, then a
//! uniform member is drawn within the group.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::Answer;
use crate::rng::rng_for;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("{what} must be finite, got {value}")]
    NonFinite { what: &'static str, value: f64 },
    #[error("perplexity must be >= 1, got {0}")]
    BadPerplexity(f64),
    #[error("{what} must be >= 0, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("gamma must be > 0 and finite, got {0}")]
    BadGamma(f64),
    #[error("group sum {index} is negative ({value})")]
    NegativeSum { index: usize, value: f64 },
    #[error("need at least one group")]
    NoGroups,
    #[error("batch size must be >= 1")]
    BadBatchSize,
    #[error("plan covers {plan} groups but {groups} were supplied")]
    GroupCountMismatch { plan: usize, groups: usize },
    #[error("group {index} is empty but has probability {probability}")]
    EmptyGroup { index: usize, probability: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Reasoning traces collected from the base corpus.
    Cot,
    /// Produced by the augmentor.
    Augmented,
}

/// One training item. Grouping for resampling is by base subquery:
/// augmented variants inherit the difficulty mass of their base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub id: String,
    pub base_subquery_id: String,
    pub scene_ref: String,
    pub gold_answer: Answer,
    pub provenance: Provenance,
    pub question_text: String,
    pub cot_text: String,
}

/// Builds the base fine-grained sample set: one [`TrainingSample`] per
/// subquery, answered and narrated by `provider` against `scene`.
/// Sample ids are `{image_ref}-{subquery_id}`, unique across scenes.
pub fn build_cot_set(
    scene: &crate::scene::Scene,
    program: &crate::compile::SubqueryProgram,
    provider: &dyn crate::answer::Answerer,
) -> Result<Vec<TrainingSample>, crate::answer::AnswerError> {
    program
        .subqueries
        .iter()
        .map(|sq| {
            let record = provider.answer(scene, sq)?;
            Ok(TrainingSample {
                id: format!("{}-{}", scene.image_ref, sq.id),
                base_subquery_id: sq.id.clone(),
                scene_ref: scene.image_ref.clone(),
                gold_answer: record.value,
                provenance: Provenance::Cot,
                question_text: sq.question_text.clone(),
                cot_text: record.cot_text,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub sample_id: String,
    pub base_subquery_id: String,
    pub d: f64,
}

/// Per-sample difficulties for one epoch plus per-group sums. Sums
/// are stored, and [`DifficultyTable::recomputed_sums`] must
/// reproduce them exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyTable {
    pub epoch: u32,
    pub rows: Vec<DifficultyRow>,
    group_sums: BTreeMap<String, f64>,
}

impl DifficultyTable {
    pub fn build(epoch: u32, rows: Vec<DifficultyRow>) -> Result<Self, ResampleError> {
        for row in &rows {
            if !row.d.is_finite() {
                return Err(ResampleError::NonFinite {
                    what: "difficulty",
                    value: row.d,
                });
            }
            if row.d < 0.0 {
                return Err(ResampleError::Negative {
                    what: "difficulty",
                    value: row.d,
                });
            }
        }
        let group_sums = sum_rows(&rows);
        Ok(DifficultyTable {
            epoch,
            rows,
            group_sums,
        })
    }

    pub fn group_sums(&self) -> &BTreeMap<String, f64> {
        &self.group_sums
    }

    /// Re-derives the sums from the rows, in the same accumulation
    /// order as [`DifficultyTable::build`].
    pub fn recomputed_sums(&self) -> BTreeMap<String, f64> {
        sum_rows(&self.rows)
    }
}

fn sum_rows(rows: &[DifficultyRow]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for row in rows {
        *sums.entry(row.base_subquery_id.clone()).or_insert(0.0) += row.d;
    }
    sums
}

/// Per-group draw probabilities, positional. Built by
/// [`sampling_plan`]; probabilities are non-negative and sum to 1
/// within 1e-12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub probabilities: Vec<f64>,
    pub gamma: f64,
}

pub fn difficulty(correct: bool, perplexity: f64, alpha: f64, beta: f64) -> Result<f64, ResampleError> {
    for (what, value) in [("perplexity", perplexity), ("alpha", alpha), ("beta", beta)] {
        if !value.is_finite() {
            return Err(ResampleError::NonFinite { what, value });
        }
    }
    if perplexity < 1.0 {
        return Err(ResampleError::BadPerplexity(perplexity));
    }
    for (what, value) in [("alpha", alpha), ("beta", beta)] {
        if value < 0.0 {
            return Err(ResampleError::Negative { what, value });
        }
    }
    Ok(alpha * if correct { 0.0 } else { 1.0 } + beta * perplexity)
}

/// Difficulty-proportional plan: `P(t) = sum_t^gamma / sum_l sum_l^gamma`,
/// uniform when every group sum is zero.
pub fn sampling_plan(group_sums: &[f64], gamma: f64) -> Result<SamplingPlan, ResampleError> {
    if group_sums.is_empty() {
        return Err(ResampleError::NoGroups);
    }
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(ResampleError::BadGamma(gamma));
    }
    for (index, &value) in group_sums.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(ResampleError::NegativeSum { index, value });
        }
    }
    let powered: Vec<f64> = group_sums.iter().map(|s| s.powf(gamma)).collect();
    let total: f64 = powered.iter().sum();
    let probabilities = if total == 0.0 {
        vec![1.0 / group_sums.len() as f64; group_sums.len()]
    } else {
        powered.iter().map(|p| p / total).collect()
    };
    Ok(SamplingPlan {
        probabilities,
        gamma,
    })
}

/// Draws `batch_size` sample ids: group by plan probability, member
/// uniform within the group. Deterministic per seed.
pub fn sample_batch(
    plan: &SamplingPlan,
    groups: &[Vec<String>],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<String>, ResampleError> {
    if batch_size == 0 {
        return Err(ResampleError::BadBatchSize);
    }
    if groups.len() != plan.probabilities.len() {
        return Err(ResampleError::GroupCountMismatch {
            plan: plan.probabilities.len(),
            groups: groups.len(),
        });
    }
    for (index, group) in groups.iter().enumerate() {
        if group.is_empty() && plan.probabilities[index] > 0.0 {
            return Err(ResampleError::EmptyGroup {
                index,
                probability: plan.probabilities[index],
            });
        }
    }
    let mut rng = rng_for(seed, &["sample-batch"]);
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let mut u = rng.random::<f64>();
        let mut chosen = groups.len() - 1;
        for (index, p) in plan.probabilities.iter().enumerate() {
            if u < *p {
                chosen = index;
                break;
            }
            u -= p;
        }
        // Floating residue can land past the last nonzero group.
        while groups[chosen].is_empty() {
            chosen = chosen.checked_sub(1).expect("some group is non-empty");
        }
        let member = rng.random_range(0..groups[chosen].len());
        batch.push(groups[chosen][member].clone());
    }
    Ok(batch)
}

/// Groups sample ids by base subquery, ordered by group id. Returns
/// parallel vectors ready for [`sample_batch`].
pub fn group_by_subquery(samples: &[TrainingSample]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut map: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for s in samples {
        map.entry(&s.base_subquery_id).or_default().push(s.id.clone());
    }
    let mut ids = Vec::with_capacity(map.len());
    let mut members = Vec::with_capacity(map.len());
    for (k, v) in map {
        ids.push(k.to_string());
        members.push(v);
    }
    (ids, members)
}

pub fn write_samples_jsonl(path: &Path, samples: &[TrainingSample]) -> std::io::Result<()> {
    let mut buf = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut buf, s)?;
        buf.write_all(b"\n")?;
    }
    crate::scene::atomic_write(path, &buf)
}

pub fn read_samples_jsonl(path: &Path) -> std::io::Result<Vec<TrainingSample>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cot_set_covers_every_subquery_once() {
        use std::collections::BTreeSet;
        let spec = crate::dsl::parse(
            r#"scenario "t" {
  classes: pin
  region tray = grid(1, 2) over [0, 0, 200, 100]
  constraint one violation="missing_pin" count(pin) >= 1 per tray
}"#,
        )
        .unwrap();
        let program = crate::compile::compile(&spec).unwrap();
        let scene = crate::generate::generate_scene(&spec, &BTreeSet::new(), 3).unwrap();
        let samples =
            build_cot_set(&scene, &program, &crate::answer::GroundTruth).unwrap();
        assert_eq!(samples.len(), program.subqueries.len());
        let ids: BTreeSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids.len(), samples.len(), "ids are unique");
        for (sample, sq) in samples.iter().zip(&program.subqueries) {
            assert_eq!(sample.base_subquery_id, sq.id);
            assert_eq!(sample.scene_ref, scene.image_ref);
            assert_eq!(sample.provenance, Provenance::Cot);
            assert!(!sample.cot_text.is_empty());
        }
    }

    #[test]
    fn difficulty_matches_hand_arithmetic() {
        assert!((difficulty(false, 5.0, 1.0, 0.2).unwrap() - 2.0).abs() <= 1e-12);
        assert_eq!(difficulty(true, 1.0, 1.0, 0.0).unwrap(), 0.0);
        assert!((difficulty(true, 1.0, 1.0, 0.2).unwrap() - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn difficulty_rejects_bad_inputs() {
        assert!(difficulty(true, 0.5, 1.0, 0.2).is_err());
        assert!(difficulty(true, f64::NAN, 1.0, 0.2).is_err());
        assert!(difficulty(true, 1.0, -1.0, 0.2).is_err());
        assert!(difficulty(true, 1.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn plan_examples() {
        let p = sampling_plan(&[1.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(p.probabilities, vec![0.25; 4]);

        let p = sampling_plan(&[3.0, 1.0], 1.0).unwrap();
        assert_eq!(p.probabilities, vec![0.75, 0.25]);

        let p = sampling_plan(&[3.0, 1.0], 2.0).unwrap();
        assert!((p.probabilities[0] - 0.9).abs() <= 1e-12);
        assert!((p.probabilities[1] - 0.1).abs() <= 1e-12);
    }

    #[test]
    fn all_zero_sums_fall_back_to_uniform() {
        let p = sampling_plan(&[0.0, 0.0, 0.0], 1.5).unwrap();
        assert_eq!(p.probabilities, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn plan_input_validation() {
        assert!(matches!(sampling_plan(&[], 1.0), Err(ResampleError::NoGroups)));
        assert!(matches!(
            sampling_plan(&[1.0], 0.0),
            Err(ResampleError::BadGamma(_))
        ));
        assert!(matches!(
            sampling_plan(&[1.0, -0.5], 1.0),
            Err(ResampleError::NegativeSum { index: 1, .. })
        ));
    }

    #[test]
    fn monotonicity_in_one_group_sum() {
        let base = sampling_plan(&[2.0, 3.0, 5.0], 1.0).unwrap();
        let bumped = sampling_plan(&[2.0, 4.0, 5.0], 1.0).unwrap();
        assert!(bumped.probabilities[1] > base.probabilities[1]);
        assert!(bumped.probabilities[0] <= base.probabilities[0]);
        assert!(bumped.probabilities[2] <= base.probabilities[2]);
    }

    #[test]
    fn large_gamma_concentrates_on_the_max() {
        let p = sampling_plan(&[5.0, 4.0, 1.0], 16.0).unwrap();
        assert!(p.probabilities[0] > 0.97, "{:?}", p.probabilities);
    }

    proptest! {
        #[test]
        fn plan_sums_to_one_and_is_scale_invariant(
            sums in proptest::collection::vec(0.0f64..1000.0, 1..12),
            gamma in 0.1f64..8.0,
            scale in 0.01f64..100.0,
        ) {
            let p = sampling_plan(&sums, gamma).unwrap();
            let total: f64 = p.probabilities.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12, "sum {total}");
            prop_assert!(p.probabilities.iter().all(|&x| x >= 0.0));

            let scaled: Vec<f64> = sums.iter().map(|s| s * scale).collect();
            let q = sampling_plan(&scaled, gamma).unwrap();
            for (a, b) in p.probabilities.iter().zip(&q.probabilities) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_group_takes_the_whole_batch() {
        let plan = sampling_plan(&[7.0], 1.0).unwrap();
        let groups = vec![vec!["s1".to_string(), "s2".to_string()]];
        let batch = sample_batch(&plan, &groups, 50, 3).unwrap();
        assert_eq!(batch.len(), 50);
        assert!(batch.iter().all(|id| id == "s1" || id == "s2"));
    }

    #[test]
    fn batch_frequencies_track_the_plan() {
        let plan = sampling_plan(&[3.0, 1.0], 1.0).unwrap();
        let groups = vec![
            vec!["a1".to_string(), "a2".to_string()],
            vec!["b1".to_string()],
        ];
        let batch = sample_batch(&plan, &groups, 100_000, 42).unwrap();
        let from_a = batch.iter().filter(|id| id.starts_with('a')).count();
        let freq = from_a as f64 / 100_000.0;
        assert!((freq - 0.75).abs() < 0.01, "{freq}");
    }

    #[test]
    fn batches_are_deterministic_per_seed() {
        let plan = sampling_plan(&[1.0, 2.0], 1.0).unwrap();
        let groups = vec![
            vec!["a1".to_string(), "a2".to_string()],
            vec!["b1".to_string(), "b2".to_string()],
        ];
        let x = sample_batch(&plan, &groups, 200, 9).unwrap();
        let y = sample_batch(&plan, &groups, 200, 9).unwrap();
        assert_eq!(x, y);
        let z = sample_batch(&plan, &groups, 200, 10).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn empty_group_with_probability_is_an_error() {
        let plan = sampling_plan(&[1.0, 1.0], 1.0).unwrap();
        let groups = vec![vec!["a".to_string()], vec![]];
        assert!(matches!(
            sample_batch(&plan, &groups, 10, 0),
            Err(ResampleError::EmptyGroup { index: 1, .. })
        ));
        // Zero-probability empty groups are fine.
        let plan = sampling_plan(&[1.0, 0.0], 1.0).unwrap();
        let batch = sample_batch(&plan, &groups, 10, 0).unwrap();
        assert!(batch.iter().all(|id| id == "a"));
    }

    #[test]
    fn table_sums_are_recomputable_exactly() {
        let rows: Vec<DifficultyRow> = (0..500)
            .map(|i| DifficultyRow {
                sample_id: format!("s{i}"),
                base_subquery_id: format!("q#{}", i % 7),
                d: 0.1 * (i as f64) + 0.2,
            })
            .collect();
        let table = DifficultyTable::build(3, rows).unwrap();
        let recomputed = table.recomputed_sums();
        assert_eq!(table.group_sums().len(), 7);
        for (group, sum) in table.group_sums() {
            assert_eq!(sum.to_bits(), recomputed[group].to_bits(), "group {group}");
        }
    }

    #[test]
    fn table_rejects_negative_difficulty() {
        let rows = vec![DifficultyRow {
            sample_id: "s".into(),
            base_subquery_id: "q#1".into(),
            d: -0.1,
        }];
        assert!(DifficultyTable::build(0, rows).is_err());
    }

    #[test]
    fn grouping_and_jsonl_roundtrip() {
        let samples: Vec<TrainingSample> = (0..6)
            .map(|i| TrainingSample {
                id: format!("s{i}"),
                base_subquery_id: format!("q#{}", i % 2 + 1),
                scene_ref: "scene_0".into(),
                gold_answer: Answer::numeric(i as f64),
                provenance: if i % 2 == 0 {
                    Provenance::Cot
                } else {
                    Provenance::Augmented
                },
                question_text: "How many?".into(),
                cot_text: "Counted.".into(),
            })
            .collect();
        let (ids, members) = group_by_subquery(&samples);
        assert_eq!(ids, vec!["q#1", "q#2"]);
        assert_eq!(members[0], vec!["s0", "s2", "s4"]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.jsonl");
        write_samples_jsonl(&path, &samples).unwrap();
        assert_eq!(read_samples_jsonl(&path).unwrap(), samples);
    }
}
