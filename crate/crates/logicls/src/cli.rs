//! Subcommand front end over the library. Every operation here is a
//! thin wrapper: parse flags, call the owning module, write files
//! atomically, print a one-line summary. Exit codes: 0 ok, 1 usage,
//! 2 validation, 3 runtime or IO, 4 remote protocol.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::aggregate::{
    classify_with_program, read_verdicts_jsonl, write_verdicts_jsonl, ClassifyError,
    UnanswerablePolicy, VerdictRecord,
};
use crate::answer::{
    end2end_classify, Answerer, AnswerError, GroundTruth, NoiseProfile, NoisyAnswerer,
    RemoteAnswerer, RemoteConfig,
};
use crate::augment::{build_augmented_set, AugmentConfig, AugmentError, AugmentOp};
use crate::compile::compile;
use crate::config::{effective_config, Config, ConfigError};
use crate::dsl::{load_spec, SpecFileError};
use crate::generate::{generate_corpus, write_corpus, CorpusProfile};
use crate::manifest::{load_manifest, save_manifest, validate_manifest, ManifestError};
use crate::metrics::{assemble_report, evaluate_dataset, score_pairs, MetricsError};
use crate::resample::{read_samples_jsonl, write_samples_jsonl};
use crate::scene::{load_scene, save_scene, LabelSet, SceneError};
use crate::simulate::{
    load_sim_config, simulate_training, write_report_json, write_trajectories_csv, SamplerKind,
    SimConfig, SimError,
};

use rayon::prelude::*;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
    Remote(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Remote(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Validation(m)
            | CliError::Runtime(m)
            | CliError::Remote(m) => m,
        }
    }
}

fn spec_err(e: SpecFileError) -> CliError {
    match e {
        SpecFileError::Read { .. } => CliError::Runtime(e.to_string()),
        SpecFileError::Parse { .. } => CliError::Validation(e.to_string()),
    }
}

fn scene_err(e: SceneError) -> CliError {
    match e {
        SceneError::Read { .. } | SceneError::Write { .. } | SceneError::Parse { .. } => {
            CliError::Runtime(e.to_string())
        }
        _ => CliError::Validation(e.to_string()),
    }
}

fn answer_err(text: String, source: &AnswerError) -> CliError {
    match source {
        AnswerError::Transport { .. } | AnswerError::Protocol(_) | AnswerError::TagParse(_) => {
            CliError::Remote(text)
        }
        AnswerError::Profile(_) => CliError::Usage(text),
    }
}

fn classify_err(e: ClassifyError) -> CliError {
    match &e {
        ClassifyError::Compile(_) => CliError::Validation(e.to_string()),
        ClassifyError::Answer { source, .. } => answer_err(e.to_string(), source),
        ClassifyError::Aggregate(_) => CliError::Runtime(e.to_string()),
    }
}

fn metrics_err(e: MetricsError) -> CliError {
    match e {
        MetricsError::Classify(inner) => classify_err(inner),
        MetricsError::Scene(inner) => scene_err(inner),
        _ => CliError::Validation(e.to_string()),
    }
}

fn augment_err(e: AugmentError) -> CliError {
    match e {
        AugmentError::Classify(inner) => classify_err(inner),
        AugmentError::Scene(inner) => scene_err(inner),
        _ => CliError::Validation(e.to_string()),
    }
}

fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::Config(_) => CliError::Validation(e.to_string()),
        SimError::Read { .. } => CliError::Runtime(e.to_string()),
        SimError::Resample(_) => CliError::Runtime(e.to_string()),
    }
}

fn config_err(e: ConfigError) -> CliError {
    match e {
        ConfigError::Read { .. } => CliError::Runtime(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn manifest_err(e: ManifestError) -> CliError {
    match e {
        ManifestError::Parse { .. } => CliError::Validation(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "logicls",
    about = "Constraint-based logical anomaly classification",
    disable_help_subcommand = true
)]
struct Cli {
    /// Config file (TOML or JSON); LOGICLS_CONFIG is the fallback.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse constraint files and report what they compile to.
    Validate {
        /// One or more .lcs files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Expand a scenario into its atomic subqueries (JSON).
    Compile {
        file: PathBuf,
        #[arg(long, default_value = "subqueries.json")]
        out: PathBuf,
    },
    /// Generate a synthetic scene corpus with injected anomalies.
    GenScenes {
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        train_normal: u32,
        #[arg(long, default_value_t = 10)]
        train_single: u32,
        #[arg(long, default_value_t = 40)]
        test_normal: u32,
        #[arg(long, default_value_t = 20)]
        test_single: u32,
        #[arg(long, default_value_t = 10)]
        test_multi: u32,
    },
    /// Expand a CoT sample set with paraphrases and scene edits.
    Augment {
        spec: PathBuf,
        /// Base training samples (JSONL).
        #[arg(long)]
        samples: PathBuf,
        /// Directory holding the scenes those samples reference.
        #[arg(long)]
        scenes_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated: cutpaste, paraphrase.
        #[arg(long, default_value = "cutpaste,paraphrase")]
        ops: String,
        #[arg(long, default_value_t = 2)]
        multiplicity: u32,
        #[arg(long)]
        seed: u64,
    },
    /// Judge scenes against a scenario's constraints.
    Classify {
        spec: PathBuf,
        /// Scene JSON files or directories of them.
        #[arg(long, required = true, num_args = 1..)]
        scenes: Vec<PathBuf>,
        /// truth | noisy:<p>:<seed> | remote:<url>
        #[arg(long, default_value = "truth")]
        answerer: String,
        /// decomposed | end2end
        #[arg(long, default_value = "decomposed")]
        mode: String,
        /// strict | lenient (default from config).
        #[arg(long)]
        policy: Option<String>,
        /// Solved scene used as the one-shot exemplar (remote only).
        #[arg(long)]
        exemplar: Option<PathBuf>,
        #[arg(long, default_value = "verdicts.jsonl")]
        out: PathBuf,
    },
    /// Score predictions against gold labels, per scenario.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Constraint files covering every scenario in the manifest.
        #[arg(long, required = true, num_args = 1..)]
        specs: Vec<PathBuf>,
        /// Root for the manifest's relative paths (default: its directory).
        #[arg(long)]
        base_dir: Option<PathBuf>,
        /// Verdict JSONL files to score; omit to classify on the fly.
        #[arg(long, num_args = 1..)]
        verdicts: Vec<PathBuf>,
        /// Used only when no --verdicts are given.
        #[arg(long, default_value = "truth")]
        answerer: String,
        #[arg(long)]
        policy: Option<String>,
        /// Also write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare uniform and difficulty-aware samplers on a synthetic learner.
    SimulateTrain {
        /// Simulator config as TOML or JSON; defaults are built in.
        #[arg(long)]
        config_file: Option<PathBuf>,
        /// uniform | difficulty-aware (default: both, paired).
        #[arg(long)]
        sampler: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

pub fn run(argv: &[String]) -> i32 {
    let (code, out, err) = run_captured(argv);
    print!("{out}");
    eprint!("{err}");
    code
}

/// Same as [`run`] but returns captured stdout/stderr instead of
/// printing, for in-process tests.
pub fn run_captured(argv: &[String]) -> (i32, String, String) {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    (0, e.to_string(), String::new())
                }
                _ => (1, String::new(), e.to_string()),
            }
        }
    };
    let mut out = String::new();
    let mut err = String::new();
    match dispatch(cli, &mut out, &mut err) {
        Ok(()) => (0, out, err),
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            (e.code(), out, err)
        }
    }
}

fn dispatch(cli: Cli, out: &mut String, err: &mut String) -> Result<(), CliError> {
    let config = effective_config(cli.config.as_deref()).map_err(config_err)?;
    let jobs = cli.jobs.or(config.jobs);
    if jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    let command = cli.command;
    let body = move |out: &mut String, err: &mut String| run_command(command, &config, out, err);
    match jobs {
        None => body(out, err),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(|| body(out, err)),
    }
}

fn run_command(
    command: Command,
    config: &Config,
    out: &mut String,
    err: &mut String,
) -> Result<(), CliError> {
    match command {
        Command::Validate { files } => cmd_validate(&files, out),
        Command::Compile { file, out: out_path } => cmd_compile(&file, &out_path, out),
        Command::GenScenes {
            spec,
            out_dir,
            seed,
            train_normal,
            train_single,
            test_normal,
            test_single,
            test_multi,
        } => {
            let profile = CorpusProfile {
                train_normal,
                train_single,
                test_normal,
                test_single,
                test_multi,
            };
            cmd_gen_scenes(&spec, &out_dir, seed, &profile, out)
        }
        Command::Augment {
            spec,
            samples,
            scenes_dir,
            out_dir,
            ops,
            multiplicity,
            seed,
        } => cmd_augment(&spec, &samples, &scenes_dir, &out_dir, &ops, multiplicity, seed, out, err),
        Command::Classify {
            spec,
            scenes,
            answerer,
            mode,
            policy,
            exemplar,
            out: out_path,
        } => cmd_classify(
            config,
            &spec,
            &scenes,
            &answerer,
            &mode,
            policy.as_deref(),
            exemplar.as_deref(),
            &out_path,
            out,
        ),
        Command::Eval {
            manifest,
            specs,
            base_dir,
            verdicts,
            answerer,
            policy,
            out: out_path,
        } => cmd_eval(
            config,
            &manifest,
            &specs,
            base_dir.as_deref(),
            &verdicts,
            &answerer,
            policy.as_deref(),
            out_path.as_deref(),
            out,
        ),
        Command::SimulateTrain {
            config_file,
            sampler,
            out_dir,
        } => cmd_simulate(config_file.as_deref(), sampler.as_deref(), &out_dir, out),
    }
}

fn cmd_validate(files: &[PathBuf], out: &mut String) -> Result<(), CliError> {
    for path in files {
        let spec = load_spec(path).map_err(spec_err)?;
        let program = compile(&spec)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let prefix = if files.len() > 1 {
            format!("{}: ", path.display())
        } else {
            String::new()
        };
        let c = spec.constraints.len();
        let m = program.subqueries.len();
        let _ = writeln!(
            out,
            "{prefix}1 scenario, {c} constraint{}, {m} subquer{}",
            if c == 1 { "" } else { "s" },
            if m == 1 { "y" } else { "ies" }
        );
    }
    Ok(())
}

fn cmd_compile(file: &Path, out_path: &Path, out: &mut String) -> Result<(), CliError> {
    let spec = load_spec(file).map_err(spec_err)?;
    let program = compile(&spec).map_err(|e| CliError::Validation(format!("{}: {e}", file.display())))?;
    let json = serde_json::to_vec_pretty(&program).map_err(|e| CliError::Runtime(e.to_string()))?;
    crate::scene::atomic_write(out_path, &json).map_err(io_err)?;
    let _ = writeln!(
        out,
        "wrote {} ({} subqueries across {} constraints)",
        out_path.display(),
        program.subqueries.len(),
        program.constraint_index.len()
    );
    Ok(())
}

fn cmd_gen_scenes(
    spec_path: &Path,
    out_dir: &Path,
    seed: u64,
    profile: &CorpusProfile,
    out: &mut String,
) -> Result<(), CliError> {
    let spec = load_spec(spec_path).map_err(spec_err)?;
    let corpus = generate_corpus(&spec, profile, seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let manifest = write_corpus(out_dir, &spec, &corpus).map_err(io_err)?;
    let manifest_path = out_dir.join("manifest.json");
    save_manifest(&manifest, &manifest_path).map_err(manifest_err)?;
    let _ = writeln!(
        out,
        "wrote {} train + {} test scenes under {} (manifest: {})",
        corpus.train.len(),
        corpus.test.len(),
        out_dir.display(),
        manifest_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_augment(
    spec_path: &Path,
    samples_path: &Path,
    scenes_dir: &Path,
    out_dir: &Path,
    ops: &str,
    multiplicity: u32,
    seed: u64,
    out: &mut String,
    err: &mut String,
) -> Result<(), CliError> {
    let spec = load_spec(spec_path).map_err(spec_err)?;
    let samples = read_samples_jsonl(samples_path).map_err(io_err)?;
    let mut scenes = BTreeMap::new();
    for path in collect_scene_paths(std::slice::from_ref(&scenes_dir.to_path_buf()))? {
        let scene = load_scene(&path).map_err(scene_err)?;
        scenes.insert(scene.image_ref.clone(), scene);
    }
    let ops = parse_ops(ops)?;
    let aug_config = AugmentConfig::new(ops, multiplicity, scenes);
    let set = build_augmented_set(&samples, &spec, &aug_config, seed).map_err(augment_err)?;
    for scene in set.scenes.values() {
        let path = out_dir.join("scenes").join(format!("{}.json", scene.image_ref));
        save_scene(scene, &path).map_err(scene_err)?;
    }
    let samples_out = out_dir.join("augmented.jsonl");
    write_samples_jsonl(&samples_out, &set.samples).map_err(io_err)?;
    for warning in &set.warnings {
        let _ = writeln!(err, "warning: {warning}");
    }
    let _ = writeln!(
        out,
        "{} augmented sample(s), {} edited scene(s), {} warning(s) -> {}",
        set.samples.len(),
        set.scenes.len(),
        set.warnings.len(),
        samples_out.display()
    );
    Ok(())
}

#[derive(Debug)]
enum AnswererKind {
    Truth,
    Noisy { p: f64, seed: u64 },
    Remote { url: String },
}

fn parse_answerer(s: &str) -> Result<AnswererKind, CliError> {
    if s == "truth" {
        return Ok(AnswererKind::Truth);
    }
    if let Some(rest) = s.strip_prefix("noisy:") {
        let (p, seed) = rest.split_once(':').ok_or_else(|| {
            CliError::Usage(format!("expected noisy:<p>:<seed>, got {s:?}"))
        })?;
        let p: f64 = p
            .parse()
            .map_err(|_| CliError::Usage(format!("bad noise probability {p:?}")))?;
        let seed: u64 = seed
            .parse()
            .map_err(|_| CliError::Usage(format!("bad noise seed {seed:?}")))?;
        return Ok(AnswererKind::Noisy { p, seed });
    }
    if let Some(url) = s.strip_prefix("remote:") {
        if url.is_empty() {
            return Err(CliError::Usage("remote answerer needs a URL".into()));
        }
        return Ok(AnswererKind::Remote { url: url.to_string() });
    }
    Err(CliError::Usage(format!(
        "unknown answerer {s:?}, expected truth, noisy:<p>:<seed>, or remote:<url>"
    )))
}

enum Provider {
    Plain(Box<dyn Answerer>),
    Remote(Box<RemoteAnswerer>),
}

impl Provider {
    fn as_dyn(&self) -> &dyn Answerer {
        match self {
            Provider::Plain(b) => b.as_ref(),
            Provider::Remote(r) => r.as_ref(),
        }
    }
}

fn build_provider(
    kind: AnswererKind,
    exemplar: Option<&Path>,
    remote_config: &RemoteConfig,
) -> Result<Provider, CliError> {
    match kind {
        AnswererKind::Truth => Ok(Provider::Plain(Box::new(GroundTruth))),
        AnswererKind::Noisy { p, seed } => {
            let profile =
                NoiseProfile::uniform(p, seed).map_err(|e| CliError::Usage(e.to_string()))?;
            let answerer =
                NoisyAnswerer::new(profile).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(Provider::Plain(Box::new(answerer)))
        }
        AnswererKind::Remote { url } => {
            let path = exemplar.ok_or_else(|| {
                CliError::Usage("remote answerer needs --exemplar <scene.json>".into())
            })?;
            let scene = load_scene(path).map_err(scene_err)?;
            Ok(Provider::Remote(Box::new(RemoteAnswerer::new(
                &url,
                scene,
                remote_config.clone(),
            ))))
        }
    }
}

fn parse_policy(flag: Option<&str>, config: &Config) -> Result<UnanswerablePolicy, CliError> {
    match flag {
        None => Ok(config.policy),
        Some(s) => s.parse().map_err(CliError::Usage),
    }
}

fn parse_ops(s: &str) -> Result<Vec<AugmentOp>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(CliError::Usage))
        .collect()
}

/// Files are taken as given; directories are walked recursively for
/// `.json` scene files (skipping manifests), sorted by path.
fn collect_scene_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    fn walk(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, found)?;
            } else if path.extension().is_some_and(|e| e == "json")
                && path.file_name().is_some_and(|n| n != "manifest.json")
            {
                found.push(path);
            }
        }
        Ok(())
    }

    let mut found = Vec::new();
    for input in inputs {
        if input.is_dir() {
            walk(input, &mut found).map_err(io_err)?;
        } else {
            found.push(input.clone());
        }
    }
    Ok(found)
}

#[allow(clippy::too_many_arguments)]
fn cmd_classify(
    config: &Config,
    spec_path: &Path,
    scene_inputs: &[PathBuf],
    answerer: &str,
    mode: &str,
    policy: Option<&str>,
    exemplar: Option<&Path>,
    out_path: &Path,
    out: &mut String,
) -> Result<(), CliError> {
    let spec = load_spec(spec_path).map_err(spec_err)?;
    let program = compile(&spec)
        .map_err(|e| CliError::Validation(format!("{}: {e}", spec_path.display())))?;
    let policy = parse_policy(policy, config)?;
    let paths = collect_scene_paths(scene_inputs)?;
    if paths.is_empty() {
        return Err(CliError::Usage("no scene files found".into()));
    }
    let mut scenes = Vec::with_capacity(paths.len());
    for path in &paths {
        let scene = load_scene(path).map_err(scene_err)?;
        if scene.scenario != spec.name {
            return Err(CliError::Validation(format!(
                "scene {} belongs to scenario {:?}, spec is {:?}",
                scene.image_ref, scene.scenario, spec.name
            )));
        }
        scenes.push(scene);
    }
    let provider = build_provider(parse_answerer(answerer)?, exemplar, &config.remote)?;
    let provider_label = provider.as_dyn().name();
    let records: Vec<VerdictRecord> = match mode {
        "decomposed" => {
            let dyn_provider = provider.as_dyn();
            scenes
                .par_iter()
                .map(|scene| {
                    classify_with_program(scene, &program, dyn_provider, policy)
                        .map(|verdict| VerdictRecord::new(&scene.image_ref, verdict))
                })
                .collect::<Result<_, _>>()
                .map_err(classify_err)?
        }
        "end2end" => {
            let remote = match &provider {
                Provider::Remote(r) => r.as_ref(),
                _ => {
                    return Err(CliError::Usage(
                        "--mode end2end needs --answerer remote:<url>".into(),
                    ))
                }
            };
            scenes
                .iter()
                .map(|scene| {
                    end2end_classify(remote, &spec, scene)
                        .map(|verdict| VerdictRecord::new(&scene.image_ref, verdict))
                })
                .collect::<Result<_, _>>()
                .map_err(classify_err)?
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown mode {other:?}, expected decomposed or end2end"
            )))
        }
    };
    write_verdicts_jsonl(out_path, &records).map_err(io_err)?;
    let _ = writeln!(
        out,
        "classified {} scene(s) with {} -> {}",
        records.len(),
        provider_label,
        out_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    config: &Config,
    manifest_path: &Path,
    spec_paths: &[PathBuf],
    base_dir: Option<&Path>,
    verdict_paths: &[PathBuf],
    answerer: &str,
    policy: Option<&str>,
    out_path: Option<&Path>,
    out: &mut String,
) -> Result<(), CliError> {
    let manifest = load_manifest(manifest_path).map_err(manifest_err)?;
    let report = validate_manifest(&manifest);
    if !report.is_valid() {
        return Err(CliError::Validation(report.to_string()));
    }
    let mut specs = BTreeMap::new();
    for path in spec_paths {
        let spec = load_spec(path).map_err(spec_err)?;
        specs.insert(spec.name.clone(), spec);
    }
    let base = base_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf());

    let eval_report = if verdict_paths.is_empty() {
        let policy = parse_policy(policy, config)?;
        let provider = build_provider(parse_answerer(answerer)?, None, &config.remote)?;
        evaluate_dataset(&base, &manifest, &specs, provider.as_dyn(), policy)
            .map_err(metrics_err)?
    } else {
        let mut preds: BTreeMap<String, LabelSet> = BTreeMap::new();
        for path in verdict_paths {
            for record in read_verdicts_jsonl(path).map_err(io_err)? {
                if preds.insert(record.scene.clone(), record.labels).is_some() {
                    return Err(CliError::Validation(format!(
                        "duplicate verdict for scene {:?}",
                        record.scene
                    )));
                }
            }
        }
        let mut reports = Vec::new();
        for entry in &manifest.scenarios {
            let spec = specs.get(&entry.name).ok_or_else(|| {
                CliError::Validation(format!("no constraint spec for scenario {:?}", entry.name))
            })?;
            let files = entry.test_files.as_ref().ok_or_else(|| {
                CliError::Validation(format!("scenario {:?} lists no test files", entry.name))
            })?;
            let mut pairs = Vec::new();
            for rel in files
                .normal
                .iter()
                .chain(&files.single_anomaly)
                .chain(&files.multi_anomaly)
            {
                let scene = load_scene(base.join(rel)).map_err(scene_err)?;
                let gold = scene.gold_labels.clone().ok_or_else(|| {
                    CliError::Validation(format!("scene {} has no gold labels", scene.image_ref))
                })?;
                let pred = preds.get(&scene.image_ref).ok_or_else(|| {
                    CliError::Validation(format!("no verdict for scene {}", scene.image_ref))
                })?;
                pairs.push((gold, pred.clone()));
            }
            reports.push(
                score_pairs(&entry.name, &pairs, &spec.violation_categories())
                    .map_err(metrics_err)?,
            );
        }
        assemble_report(reports).map_err(metrics_err)?
    };

    out.push_str(&eval_report.table());
    if let Some(path) = out_path {
        let json =
            serde_json::to_vec_pretty(&eval_report).map_err(|e| CliError::Runtime(e.to_string()))?;
        crate::scene::atomic_write(path, &json).map_err(io_err)?;
        let _ = writeln!(out, "report: {}", path.display());
    }
    Ok(())
}

fn cmd_simulate(
    config_file: Option<&Path>,
    sampler: Option<&str>,
    out_dir: &Path,
    out: &mut String,
) -> Result<(), CliError> {
    let mut sim_config = match config_file {
        Some(path) => load_sim_config(path).map_err(sim_err)?,
        None => SimConfig::default(),
    };
    if let Some(s) = sampler {
        sim_config.sampler = Some(s.parse::<SamplerKind>().map_err(CliError::Usage)?);
    }
    let report = simulate_training(&sim_config).map_err(sim_err)?;
    let csv_path = out_dir.join("trajectories.csv");
    let json_path = out_dir.join("summary.json");
    write_trajectories_csv(&csv_path, &report).map_err(io_err)?;
    write_report_json(&json_path, &report).map_err(io_err)?;
    let mut by_sampler: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for run in &report.runs {
        by_sampler
            .entry(run.sampler.name())
            .or_default()
            .push(run.final_max_error);
    }
    for (name, errors) in &by_sampler {
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let _ = writeln!(
            out,
            "{name}: mean final max-group error {mean:.4} over {} seed(s)",
            errors.len()
        );
    }
    let pairs = report.paired_final_errors();
    if !pairs.is_empty() {
        let wins = pairs.iter().filter(|(_, uniform, aware)| aware < uniform).count();
        let _ = writeln!(
            out,
            "difficulty-aware beat uniform on {wins}/{} seed(s)",
            pairs.len()
        );
    }
    let _ = writeln!(out, "wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        std::iter::once("logicls")
            .chain(list.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (code, _, err) = run_captured(&args(&["frobnicate"]));
        assert_eq!(code, 1);
        assert!(!err.is_empty());
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_captured(&args(&["--help"]));
        assert_eq!(code, 0);
        assert!(out.contains("validate"));
        assert!(out.contains("simulate-train"));
    }

    #[test]
    fn answerer_strings_parse() {
        assert!(matches!(parse_answerer("truth"), Ok(AnswererKind::Truth)));
        match parse_answerer("noisy:0.25:42") {
            Ok(AnswererKind::Noisy { p, seed }) => {
                assert_eq!(p, 0.25);
                assert_eq!(seed, 42);
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_answerer("remote:http://localhost:8080") {
            Ok(AnswererKind::Remote { url }) => assert_eq!(url, "http://localhost:8080"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_answerer("psychic").is_err());
        assert!(parse_answerer("noisy:0.5").is_err());
        assert!(parse_answerer("remote:").is_err());
    }

    #[test]
    fn ops_strings_parse() {
        let ops = parse_ops("cutpaste,paraphrase").unwrap();
        assert_eq!(ops, vec![AugmentOp::CutPaste, AugmentOp::Paraphrase]);
        assert!(parse_ops("cutpaste,telepathy").is_err());
    }

    #[test]
    fn validate_reports_counts_and_positions() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.lcs");
        std::fs::write(
            &good,
            "scenario \"t\" {\n  classes: pin\n  constraint c violation=\"missing\" count(pin) >= 1\n}\n",
        )
        .unwrap();
        let (code, out, _) = run_captured(&args(&["validate", good.to_str().unwrap()]));
        assert_eq!(code, 0);
        assert_eq!(out, "1 scenario, 1 constraint, 1 subquery\n");

        let bad = dir.path().join("bad.lcs");
        std::fs::write(&bad, "scenario \"t\" {\n  classes: pin\n  wibble\n}\n").unwrap();
        let (code, _, err) = run_captured(&args(&["validate", bad.to_str().unwrap()]));
        assert_eq!(code, 2);
        assert!(err.contains("line 3"), "{err}");

        let (code, _, _) = run_captured(&args(&["validate", "/nonexistent/x.lcs"]));
        assert_eq!(code, 3);
    }
}
