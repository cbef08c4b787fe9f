//! Manifest-driven evaluation: write a corpus to disk, then score a
//! provider against gold labels across every test scene it lists.

use std::collections::BTreeMap;

use logicls::answer::{NoiseProfile, NoisyAnswerer};
use logicls::generate::{generate_corpus, write_corpus, CorpusProfile};
use logicls::manifest::{save_manifest, validate_manifest, DatasetManifest};
use logicls::metrics::evaluate_dataset;
use logicls::{parse, UnanswerablePolicy};

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut specs = BTreeMap::new();
    let mut entries = Vec::new();

    for name in ["pushpins", "screw_bag"] {
        let text = std::fs::read_to_string(format!(
            "{}/../../scenarios/{name}.lcs",
            env!("CARGO_MANIFEST_DIR")
        ))
        .expect("scenario file");
        let spec = parse(&text).expect("parse");
        let profile = CorpusProfile {
            train_normal: 4,
            train_single: 2,
            test_normal: 30,
            test_single: 15,
            test_multi: 5,
        };
        let corpus = generate_corpus(&spec, &profile, 17).expect("corpus");
        let manifest = write_corpus(dir.path(), &spec, &corpus).expect("write");
        entries.extend(manifest.scenarios);
        specs.insert(spec.name.clone(), spec);
    }

    let manifest = DatasetManifest { scenarios: entries };
    let report = validate_manifest(&manifest);
    assert!(report.is_valid(), "{report}");
    save_manifest(&manifest, dir.path().join("manifest.json")).expect("save");

    let noisy =
        NoisyAnswerer::new(NoiseProfile::uniform(0.08, 3).expect("profile")).expect("answerer");
    let report = evaluate_dataset(
        dir.path(),
        &manifest,
        &specs,
        &noisy,
        UnanswerablePolicy::Strict,
    )
    .expect("evaluate");
    println!("{}", report.table());
}
