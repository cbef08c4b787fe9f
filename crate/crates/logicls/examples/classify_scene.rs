//! Decompose a scene into subquery answers and fold them into a
//! set-valued verdict, with the evidence trail that backs each label.

use std::collections::BTreeSet;

use logicls::aggregate::{classify_with_program, CheckOutcome};
use logicls::answer::GroundTruth;
use logicls::generate::generate_scene;
use logicls::{compile, parse, UnanswerablePolicy};

fn main() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/juice_bottle.lcs"
    ))
    .expect("scenario file");
    let spec = parse(&text).expect("parse");
    let program = compile(&spec).expect("compile");

    let injected = BTreeSet::from(["fill_level".to_string(), "wrong_flavor".to_string()]);
    let scene = generate_scene(&spec, &injected, 21).expect("generate");
    let verdict =
        classify_with_program(&scene, &program, &GroundTruth, UnanswerablePolicy::Strict)
            .expect("classify");

    let labels: Vec<&str> = verdict.labels.labels().collect();
    println!("{} -> {{{}}}\n", scene.image_ref, labels.join(", "));
    for item in &verdict.evidence {
        let mark = match item.outcome {
            CheckOutcome::Satisfied => "ok",
            CheckOutcome::Violated => "VIOLATED",
            CheckOutcome::Unanswerable => "unanswerable",
        };
        println!("  [{:12}] {} = {} ({mark})", item.subquery_id, item.question_text, item.answer.value);
    }

    assert_eq!(&verdict.labels, scene.gold_labels.as_ref().unwrap());
    println!("\nverdict matches the generator's gold labels");
}
