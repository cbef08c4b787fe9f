//! One-shot in-context prompt assembly: a system prompt fixing the
//! output format, one worked exemplar, and the test image.

use serde::{Deserialize, Serialize};

use super::tags::{render_tagged, ANSWER_CLOSE, ANSWER_OPEN, THINK_CLOSE, THINK_OPEN};
use super::AnswerRecord;
use crate::compile::AtomicSubquery;

const USER_TEMPLATE: &str = "Look at the image and answer the question.\nQuestion: [SUBQUERY]";

/// Everything the remote side needs to answer one subquery.
/// Assembly is pure, so identical inputs give byte-identical bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub user_prompt: String,
    pub exemplar_image_ref: String,
    pub exemplar_output: String,
    pub test_image_ref: String,
}

pub fn system_prompt() -> String {
    format!(
        "You are an inspection assistant. You are shown one solved example \
         and then a test image with the same kind of question. Reason step \
         by step inside {THINK_OPEN}...{THINK_CLOSE}, then give only the final \
         answer inside {ANSWER_OPEN}...{ANSWER_CLOSE}. Answer counting \
         questions with a number, yes/no questions with yes or no, and \
         choice questions with one of the offered values."
    )
}

pub fn user_prompt(question: &str) -> String {
    USER_TEMPLATE.replace("[SUBQUERY]", question)
}

pub fn render_icl_prompt(
    subquery: &AtomicSubquery,
    exemplar: (&str, &AnswerRecord),
    test_image_ref: &str,
) -> PromptBundle {
    let (exemplar_image_ref, exemplar_record) = exemplar;
    let exemplar_output = render_tagged(
        &exemplar_record.cot_text,
        &exemplar_record.value.to_string(),
    );
    PromptBundle {
        system_prompt: system_prompt(),
        user_prompt: user_prompt(&subquery.question_text),
        exemplar_image_ref: exemplar_image_ref.to_string(),
        exemplar_output,
        test_image_ref: test_image_ref.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::compile;
    use crate::dsl::parse;
    use crate::eval::Answer;

    fn subquery() -> AtomicSubquery {
        let spec = parse(
            r#"scenario "s" {
  classes: pin
  constraint c violation="x" count(pin) == 2
}"#,
        )
        .unwrap();
        compile(&spec).unwrap().subqueries[0].clone()
    }

    fn exemplar_record() -> AnswerRecord {
        AnswerRecord {
            subquery_id: "c#1".into(),
            value: Answer::numeric(2.0),
            cot_text: "Two pins at [10, 10, 20, 20] and [30, 10, 40, 20].".into(),
            perplexity: 1.0,
        }
    }

    #[test]
    fn system_prompt_contains_both_tag_pairs_verbatim() {
        let rec = exemplar_record();
        let bundle = render_icl_prompt(&subquery(), ("train_3", &rec), "test_9");
        for tag in ["<think>", "</think>", "<answer>", "</answer>"] {
            assert!(bundle.system_prompt.contains(tag), "missing {tag}");
        }
    }

    #[test]
    fn user_prompt_substitutes_the_question() {
        let rec = exemplar_record();
        let bundle = render_icl_prompt(&subquery(), ("train_3", &rec), "test_9");
        assert!(!bundle.user_prompt.contains("[SUBQUERY]"));
        assert!(bundle.user_prompt.contains(&subquery().question_text));
    }

    #[test]
    fn empty_cot_exemplar_renders_an_empty_think_block() {
        let mut rec = exemplar_record();
        rec.cot_text = String::new();
        let bundle = render_icl_prompt(&subquery(), ("train_3", &rec), "test_9");
        assert!(bundle.exemplar_output.starts_with("<think></think>"));
        assert!(bundle.exemplar_output.contains("<answer>2</answer>"));
    }

    #[test]
    fn assembly_is_deterministic() {
        let rec = exemplar_record();
        let a = render_icl_prompt(&subquery(), ("train_3", &rec), "test_9");
        let b = render_icl_prompt(&subquery(), ("train_3", &rec), "test_9");
        assert_eq!(a, b);
    }
}
