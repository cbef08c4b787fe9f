//! The shipped scenario files are data, so nothing type-checks them.
//! This suite keeps them honest: each must parse, compile, round-trip
//! through the printer, and support generation of every violation
//! category alone and in pairs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use logicls::aggregate::{classify_with_program, UnanswerablePolicy};
use logicls::answer::GroundTruth;
use logicls::dsl::{load_spec, parse, serialize};
use logicls::generate::generate_scene;
use logicls::{compile, ScenarioSpec};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn corpus() -> Vec<ScenarioSpec> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("scenarios directory exists")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "lcs"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_spec(p).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .collect()
}

#[test]
fn five_scenarios_ship() {
    let names: Vec<String> = corpus().into_iter().map(|s| s.name).collect();
    assert_eq!(
        names,
        [
            "breakfast_box",
            "juice_bottle",
            "pushpins",
            "screw_bag",
            "splicing_connectors"
        ]
    );
}

#[test]
fn corpus_compiles_and_roundtrips() {
    for spec in corpus() {
        let program = compile(&spec).unwrap_or_else(|e| panic!("{}: {e}", spec.name));
        assert!(!program.subqueries.is_empty());
        let text = serialize(&spec);
        let again = parse(&text).unwrap_or_else(|e| panic!("{}: {e}", spec.name));
        assert_eq!(spec, again, "printer round-trip for {}", spec.name);
    }
}

#[test]
fn pushpins_compiles_to_thirty_cells() {
    let spec = load_spec(corpus_dir().join("pushpins.lcs")).unwrap();
    let program = compile(&spec).unwrap();
    // Two per-cell constraints over a 3x5 grid.
    assert_eq!(program.subqueries.len(), 30);
}

#[test]
fn every_category_generates_alone() {
    for spec in corpus() {
        let program = compile(&spec).unwrap();
        for category in spec.violation_categories() {
            let injected = BTreeSet::from([category.clone()]);
            for seed in 0..5 {
                let scene = generate_scene(&spec, &injected, seed)
                    .unwrap_or_else(|e| panic!("{} / {category}: {e}", spec.name));
                let verdict = classify_with_program(
                    &scene,
                    &program,
                    &GroundTruth,
                    UnanswerablePolicy::Strict,
                )
                .unwrap();
                let got: BTreeSet<String> =
                    verdict.labels.labels().map(str::to_string).collect();
                assert_eq!(got, injected, "{} seed {seed}", spec.name);
            }
        }
    }
}

#[test]
fn every_pair_generates_together() {
    for spec in corpus() {
        let program = compile(&spec).unwrap();
        let categories = spec.violation_categories();
        for i in 0..categories.len() {
            for j in (i + 1)..categories.len() {
                let injected =
                    BTreeSet::from([categories[i].clone(), categories[j].clone()]);
                let scene = generate_scene(&spec, &injected, 11)
                    .unwrap_or_else(|e| panic!("{} / {injected:?}: {e}", spec.name));
                let verdict = classify_with_program(
                    &scene,
                    &program,
                    &GroundTruth,
                    UnanswerablePolicy::Strict,
                )
                .unwrap();
                let got: BTreeSet<String> =
                    verdict.labels.labels().map(str::to_string).collect();
                assert_eq!(got, injected, "{}", spec.name);
            }
        }
    }
}

#[test]
fn normal_scenes_classify_normal() {
    for spec in corpus() {
        let program = compile(&spec).unwrap();
        for seed in 0..10 {
            let scene = generate_scene(&spec, &BTreeSet::new(), seed)
                .unwrap_or_else(|e| panic!("{} seed {seed}: {e}", spec.name));
            let verdict = classify_with_program(
                &scene,
                &program,
                &GroundTruth,
                UnanswerablePolicy::Strict,
            )
            .unwrap();
            assert!(
                verdict.labels.is_normal(),
                "{} seed {seed}: {:?}",
                spec.name,
                verdict.labels
            );
        }
    }
}
