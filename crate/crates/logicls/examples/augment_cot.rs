//! Build a chain-of-thought training set from a scene, then expand it
//! with paraphrased questions and cut-paste scene edits. Gold answers
//! for edited scenes come from re-evaluating the edit, never from the
//! base sample.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use logicls::answer::GroundTruth;
use logicls::augment::{build_augmented_set, AugmentConfig, AugmentOp};
use logicls::generate::generate_scene;
use logicls::resample::build_cot_set;
use logicls::{compile, parse};

fn main() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/splicing_connectors.lcs"
    ))
    .expect("scenario file");
    let spec = parse(&text).expect("parse");
    let program = compile(&spec).expect("compile");

    let scene = generate_scene(&spec, &BTreeSet::new(), 13).expect("generate");
    let cot_set = build_cot_set(&scene, &program, &GroundTruth).expect("cot set");
    println!(
        "base set: {} samples from {}",
        cot_set.len(),
        scene.image_ref
    );

    let scenes = BTreeMap::from([(scene.image_ref.clone(), scene.clone())]);
    let config = AugmentConfig::new(
        vec![AugmentOp::Paraphrase, AugmentOp::CutPaste],
        4,
        scenes,
    );
    let augmented = build_augmented_set(&cot_set, &spec, &config, 99).expect("augment");
    println!(
        "augmented: {} samples, {} edited scenes, {} warnings",
        augmented.samples.len(),
        augmented.scenes.len(),
        augmented.warnings.len()
    );

    let base = &cot_set[0];
    println!("\nbase     [{}] {}", base.id, base.question_text);
    for sample in augmented
        .samples
        .iter()
        .filter(|s| s.base_subquery_id == base.base_subquery_id)
        .take(4)
    {
        let edited = sample.scene_ref != base.scene_ref;
        println!(
            "variant  [{}] {} (scene {}, answer {})",
            sample.id,
            sample.question_text,
            if edited { "edited" } else { "shared" },
            sample.gold_answer
        );
    }
    for warning in augmented.warnings.iter().take(3) {
        println!("warning: {warning}");
    }
}
