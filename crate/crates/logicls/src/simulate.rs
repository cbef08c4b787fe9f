//! Seeded training-loop simulator. A synthetic learner has one skill
//! per subquery group; every exposure nudges the skill toward 1. At
//! the top of each epoch the difficulty-aware sampler re-scores all
//! samples (correctness drawn from current skill, perplexity from the
//! noisy-answerer model), rebuilds group sums, and redraws its plan.
//! The uniform sampler keeps an equal-probability plan throughout.
//!
//! The learner dynamics are deliberately simple stand-ins; what the
//! simulator demonstrates is the resampling mechanism, not a training
//! claim.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resample::{
    difficulty, sample_batch, sampling_plan, DifficultyRow, DifficultyTable, ResampleError,
};
use crate::rng::{mix, rng_for};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad simulator config: {0}")]
    Config(String),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    DifficultyAware,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::DifficultyAware => "difficulty_aware",
        }
    }
}

impl FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(SamplerKind::Uniform),
            "difficulty_aware" | "difficulty-aware" => Ok(SamplerKind::DifficultyAware),
            other => Err(format!(
                "unknown sampler {other:?}, expected uniform or difficulty-aware"
            )),
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Initial per-group skill in [0, 1): probability of answering a
    /// group sample correctly.
    pub group_skills: Vec<f64>,
    pub samples_per_group: u32,
    /// Skill update per exposure: skill += learning_rate * (1 - skill).
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: u32,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Perplexity inflation of the synthetic answer model.
    pub kappa: f64,
    pub seeds: Vec<u64>,
    /// None runs both samplers on every seed, which is what the
    /// paired comparison wants.
    pub sampler: Option<SamplerKind>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            group_skills: vec![0.9, 0.9, 0.9, 0.3, 0.3],
            samples_per_group: 32,
            learning_rate: 0.02,
            epochs: 30,
            batch_size: 16,
            gamma: 1.0,
            alpha: 1.0,
            beta: 0.2,
            kappa: 1.0,
            seeds: (0..10).collect(),
            sampler: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.group_skills.is_empty() {
            return bad("group_skills must not be empty".into());
        }
        for (i, s) in self.group_skills.iter().enumerate() {
            if !s.is_finite() || !(0.0..1.0).contains(s) {
                return bad(format!("group_skills[{i}] = {s} outside [0, 1)"));
            }
        }
        if self.samples_per_group == 0 {
            return bad("samples_per_group must be >= 1".into());
        }
        if !self.learning_rate.is_finite() || !(0.0..=1.0).contains(&self.learning_rate) {
            return bad(format!("learning_rate {} outside [0, 1]", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return bad(format!("gamma {} must be > 0", self.gamma));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("kappa", self.kappa)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} {v} must be finite and >= 0"));
            }
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        Ok(())
    }
}

/// TOML by default, JSON for `.json` paths.
pub fn load_sim_config(path: &Path) -> Result<SimConfig, SimError> {
    let read_err = |message: String| SimError::Read {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
    let config: SimConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| read_err(e.to_string()))?
    };
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub sampler: SamplerKind,
    pub seed: u64,
    /// `error_trajectories[e][g]` = error of group g after e epochs;
    /// row 0 is the initial state.
    pub error_trajectories: Vec<Vec<f64>>,
    pub final_max_error: f64,
    pub exposures: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub runs: Vec<SimRun>,
}

impl SimReport {
    /// (seed, uniform final max error, difficulty-aware final max
    /// error) for every seed both samplers ran on.
    pub fn paired_final_errors(&self) -> Vec<(u64, f64, f64)> {
        let mut by_seed: BTreeMap<u64, (Option<f64>, Option<f64>)> = BTreeMap::new();
        for run in &self.runs {
            let entry = by_seed.entry(run.seed).or_default();
            match run.sampler {
                SamplerKind::Uniform => entry.0 = Some(run.final_max_error),
                SamplerKind::DifficultyAware => entry.1 = Some(run.final_max_error),
            }
        }
        by_seed
            .into_iter()
            .filter_map(|(seed, pair)| match pair {
                (Some(u), Some(a)) => Some((seed, u, a)),
                _ => None,
            })
            .collect()
    }
}

pub fn simulate_training(config: &SimConfig) -> Result<SimReport, SimError> {
    config.validate()?;
    let samplers: Vec<SamplerKind> = match config.sampler {
        Some(kind) => vec![kind],
        None => vec![SamplerKind::Uniform, SamplerKind::DifficultyAware],
    };
    let mut runs = Vec::new();
    for sampler in samplers {
        for &seed in &config.seeds {
            runs.push(run_one(config, sampler, seed)?);
        }
    }
    Ok(SimReport {
        config: config.clone(),
        runs,
    })
}

fn errors(skills: &[f64]) -> Vec<f64> {
    skills.iter().map(|s| 1.0 - s).collect()
}

fn group_key(g: usize) -> String {
    format!("g{g:03}")
}

fn run_one(config: &SimConfig, sampler: SamplerKind, seed: u64) -> Result<SimRun, SimError> {
    let n = config.group_skills.len();
    let mut skills = config.group_skills.clone();
    let mut rng = rng_for(seed, &["simulate", sampler.name()]);
    let groups: Vec<Vec<String>> = (0..n)
        .map(|g| {
            (0..config.samples_per_group)
                .map(|s| format!("{}_s{s}", group_key(g)))
                .collect()
        })
        .collect();
    let mut exposures = vec![0u64; n];
    let mut trajectories = vec![errors(&skills)];

    for epoch in 0..config.epochs {
        let plan = match sampler {
            SamplerKind::Uniform => sampling_plan(&vec![1.0; n], config.gamma)?,
            SamplerKind::DifficultyAware => {
                // Epoch 0 uses the pre-scored initial state; later
                // epochs use the scores from the previous epoch's end,
                // which is the same as scoring here.
                let table = score_all(config, &skills, epoch, &mut rng)?;
                let sums: Vec<f64> = table.group_sums().values().copied().collect();
                sampling_plan(&sums, config.gamma)?
            }
        };
        let batch_seed = mix(seed, &["sim-batch", sampler.name(), &epoch.to_string()]);
        let batch = sample_batch(&plan, &groups, config.batch_size as usize, batch_seed)?;
        for sample_id in &batch {
            let g: usize = sample_id[1..4].parse().expect("sample ids embed their group");
            exposures[g] += 1;
            skills[g] += config.learning_rate * (1.0 - skills[g]);
        }
        trajectories.push(errors(&skills));
    }

    let final_max_error = trajectories
        .last()
        .unwrap()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SimRun {
        sampler,
        seed,
        error_trajectories: trajectories,
        final_max_error,
        exposures,
    })
}

/// Scores every synthetic sample: correctness drawn from the group's
/// current skill, perplexity from the noisy-answer model
/// (`1 + kappa` when wrong, `1 + kappa * U[0, 0.25]` when right).
fn score_all(
    config: &SimConfig,
    skills: &[f64],
    epoch: u32,
    rng: &mut ChaCha8Rng,
) -> Result<DifficultyTable, SimError> {
    let mut rows = Vec::with_capacity(skills.len() * config.samples_per_group as usize);
    for (g, &skill) in skills.iter().enumerate() {
        for s in 0..config.samples_per_group {
            let correct = rng.random::<f64>() < skill;
            let perplexity = 1.0
                + config.kappa * if correct { rng.random::<f64>() * 0.25 } else { 1.0 };
            let d = difficulty(correct, perplexity, config.alpha, config.beta)?;
            rows.push(DifficultyRow {
                sample_id: format!("{}_s{s}", group_key(g)),
                base_subquery_id: group_key(g),
                d,
            });
        }
    }
    Ok(DifficultyTable::build(epoch, rows)?)
}

/// One row per (run, epoch, group), ready for plotting.
pub fn write_trajectories_csv(path: &Path, report: &SimReport) -> std::io::Result<()> {
    let mut buf = String::from("sampler,seed,epoch,group,error\n");
    for run in &report.runs {
        for (epoch, row) in run.error_trajectories.iter().enumerate() {
            for (group, error) in row.iter().enumerate() {
                buf.push_str(&format!(
                    "{},{},{epoch},{group},{error}\n",
                    run.sampler.name(),
                    run.seed
                ));
            }
        }
    }
    crate::scene::atomic_write(path, buf.as_bytes())
}

pub fn write_report_json(path: &Path, report: &SimReport) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    crate::scene::atomic_write(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> SimConfig {
        SimConfig {
            group_skills: vec![0.9, 0.3],
            samples_per_group: 8,
            epochs: 10,
            batch_size: 8,
            seeds: (0..10).collect(),
            ..SimConfig::default()
        }
    }

    #[test]
    fn config_bounds_are_enforced() {
        let mut c = SimConfig::default();
        c.group_skills = vec![];
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.group_skills[0] = 1.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.learning_rate = 1.5;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.seeds.clear();
        assert!(c.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
    }

    #[test]
    fn zero_learning_rate_keeps_trajectories_flat() {
        let config = SimConfig {
            learning_rate: 0.0,
            ..quick_config()
        };
        let report = simulate_training(&config).unwrap();
        for run in &report.runs {
            for row in &run.error_trajectories {
                assert_eq!(row, &run.error_trajectories[0]);
            }
        }
    }

    #[test]
    fn weak_group_gets_more_exposures_under_difficulty_aware_every_seed() {
        let config = quick_config();
        let report = simulate_training(&config).unwrap();
        let mut uniform: BTreeMap<u64, u64> = BTreeMap::new();
        let mut aware: BTreeMap<u64, u64> = BTreeMap::new();
        for run in &report.runs {
            // Group 1 is the weak one (skill 0.3).
            match run.sampler {
                SamplerKind::Uniform => uniform.insert(run.seed, run.exposures[1]),
                SamplerKind::DifficultyAware => aware.insert(run.seed, run.exposures[1]),
            };
        }
        for (&seed, &u) in &uniform {
            let a = aware[&seed];
            assert!(a > u, "seed {seed}: aware {a} <= uniform {u}");
        }
    }

    #[test]
    fn default_config_wins_most_paired_seeds() {
        let config = SimConfig::default();
        let report = simulate_training(&config).unwrap();
        let pairs = report.paired_final_errors();
        assert_eq!(pairs.len(), 10);
        let wins = pairs.iter().filter(|(_, u, a)| a < u).count();
        assert!(wins >= 9, "only {wins}/10 paired wins: {pairs:?}");
    }

    #[test]
    fn simulation_is_deterministic() {
        let config = quick_config();
        let a = simulate_training(&config).unwrap();
        let b = simulate_training(&config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn single_sampler_config_runs_only_that_sampler() {
        let config = SimConfig {
            sampler: Some(SamplerKind::Uniform),
            seeds: vec![1, 2],
            ..quick_config()
        };
        let report = simulate_training(&config).unwrap();
        assert_eq!(report.runs.len(), 2);
        assert!(report.runs.iter().all(|r| r.sampler == SamplerKind::Uniform));
        assert!(report.paired_final_errors().is_empty());
    }

    #[test]
    fn csv_rows_cover_every_epoch_group_cell() {
        let config = SimConfig {
            seeds: vec![0],
            ..quick_config()
        };
        let report = simulate_training(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectories_csv(&path, &report).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows = text.lines().count();
        // Header + 2 runs x (epochs + 1) x 2 groups.
        assert_eq!(rows, 1 + 2 * (config.epochs as usize + 1) * 2);
        assert!(text.starts_with("sampler,seed,epoch,group,error\n"));
    }

    #[test]
    fn config_files_load_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("sim.toml");
        std::fs::write(
            &toml_path,
            "group_skills = [0.8, 0.4]\nepochs = 5\nseeds = [1, 2, 3]\n",
        )
        .unwrap();
        let c = load_sim_config(&toml_path).unwrap();
        assert_eq!(c.group_skills, vec![0.8, 0.4]);
        assert_eq!(c.epochs, 5);
        // Unlisted fields take defaults.
        assert_eq!(c.batch_size, SimConfig::default().batch_size);

        let json_path = dir.path().join("sim.json");
        std::fs::write(
            &json_path,
            r#"{"group_skills": [0.5], "sampler": "difficulty_aware"}"#,
        )
        .unwrap();
        let c = load_sim_config(&json_path).unwrap();
        assert_eq!(c.sampler, Some(SamplerKind::DifficultyAware));
    }
}
