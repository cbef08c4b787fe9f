//! Swap the ground-truth answerer for a corrupted one and watch
//! binary F1 degrade as the per-subquery error rate grows.

use logicls::aggregate::classify_with_program;
use logicls::answer::{NoiseProfile, NoisyAnswerer};
use logicls::generate::{generate_corpus, CorpusProfile};
use logicls::metrics::binary_f1;
use logicls::scene::LabelSet;
use logicls::{compile, parse, UnanswerablePolicy};

fn main() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/breakfast_box.lcs"
    ))
    .expect("scenario file");
    let spec = parse(&text).expect("parse");
    let program = compile(&spec).expect("compile");

    let profile = CorpusProfile {
        train_normal: 0,
        train_single: 0,
        test_normal: 100,
        test_single: 80,
        test_multi: 20,
    };
    let corpus = generate_corpus(&spec, &profile, 5).expect("corpus");

    println!("noise  binary F1  (200 scenes)");
    for p in [0.0, 0.02, 0.05, 0.1, 0.2] {
        let noisy = NoisyAnswerer::new(NoiseProfile::uniform(p, 11).expect("profile"))
            .expect("answerer");
        let pairs: Vec<(LabelSet, LabelSet)> = corpus
            .test
            .iter()
            .map(|scene| {
                let verdict =
                    classify_with_program(scene, &program, &noisy, UnanswerablePolicy::Strict)
                        .expect("classify");
                (scene.gold_labels.clone().unwrap(), verdict.labels)
            })
            .collect();
        println!("{p:<6} {:.4}", binary_f1(&pairs).expect("f1"));
    }
}
