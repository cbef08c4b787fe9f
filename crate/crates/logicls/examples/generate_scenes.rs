//! Generate synthetic scenes with chosen anomaly injections, then a
//! full train/test corpus with its dataset manifest.

use std::collections::BTreeSet;

use logicls::generate::{generate_corpus, generate_scene, CorpusProfile};
use logicls::parse;

fn main() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/pushpins.lcs"
    ))
    .expect("scenario file");
    let spec = parse(&text).expect("parse");

    for injected in [
        BTreeSet::new(),
        BTreeSet::from(["missing_pushpin".to_string()]),
        BTreeSet::from([
            "missing_pushpin".to_string(),
            "additional_pushpin".to_string(),
        ]),
    ] {
        let scene = generate_scene(&spec, &injected, 7).expect("generate");
        let labels: Vec<&str> = scene.gold_labels.as_ref().unwrap().labels().collect();
        println!(
            "{}: {} objects, gold = {{{}}}",
            scene.image_ref,
            scene.objects.len(),
            labels.join(", ")
        );
    }

    // A corpus draws categories and pairs at random but stays fully
    // determined by the seed.
    let profile = CorpusProfile {
        train_normal: 8,
        train_single: 4,
        test_normal: 8,
        test_single: 6,
        test_multi: 2,
    };
    let corpus = generate_corpus(&spec, &profile, 42).expect("corpus");
    println!(
        "\ncorpus: {} train + {} test scenes",
        corpus.train.len(),
        corpus.test.len()
    );
    let anomalous = corpus
        .test
        .iter()
        .filter(|s| !s.gold_labels.as_ref().unwrap().is_normal())
        .count();
    println!("  anomalous test scenes: {anomalous}");
}
