//! Parse a constraint file, round-trip it through the printer, and
//! expand it into atomic subqueries.

use logicls::compile::describe_rule;
use logicls::{compile, parse, serialize};

fn main() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/juice_bottle.lcs"
    );
    let text = std::fs::read_to_string(path).expect("scenario file");
    let spec = parse(&text).expect("parse");

    println!("scenario {:?}", spec.name);
    println!("  classes: {}", spec.classes.join(", "));
    for constraint in &spec.constraints {
        println!(
            "  {} -> {:?}: {}",
            constraint.id,
            constraint.violation_category,
            describe_rule(&constraint.rule)
        );
    }

    // The printer is a fixpoint: parse(serialize(spec)) == spec.
    let printed = serialize(&spec);
    assert_eq!(parse(&printed).expect("reparse"), spec);
    println!("\nreprint is stable ({} bytes)", printed.len());

    let program = compile(&spec).expect("compile");
    println!(
        "\n{} subqueries across {} constraints:",
        program.subqueries.len(),
        program.constraint_index.len()
    );
    for sq in &program.subqueries {
        println!("  [{}] {} ({:?})", sq.id, sq.question_text, sq.reasoning_kind);
    }
}
