//! Judge prompts for checking a predicted answer against the reference.
//!
//! Templates are stored verbatim; `{question}`, `{correct_answer}` /
//! `{correct_answers}` and `{predicted_answer}` are filled in a single pass,
//! so placeholder-like text inside the values is left alone.

use crate::error::CliError;

pub const SINGLE_ANSWER_TEMPLATE: &str = "We are assessing the quality of answers to the following question: {question}\n\
The expected answer is: {correct_answer}.\n\
The proposed answer is: {predicted_answer}\n\
Within the context of the question, does the proposed answer mean the same as the expected answer?\n\
Respond only with yes or no.\n\
Response:";

pub const MULTIPLE_ANSWER_TEMPLATE: &str = "We are assessing the quality of answers to the following question: {question}\n\
The following are expected answers to this question: {correct_answers}.\n\
The proposed answer is: {predicted_answer}\n\
Within the context of the question, does the proposed answer mean the same as any of the expected answers?\n\
Respond only with yes or no.\n\
Response:";

/// Separator between reference answers in the multiple-answer prompt.
pub const ANSWER_SEPARATOR: &str = ", ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PromptMode {
    Single,
    Multiple,
}

fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        match values.iter().find(|(name, _)| {
            tail.strip_prefix('{')
                .and_then(|t| t.strip_prefix(name))
                .is_some_and(|t| t.starts_with('}'))
        }) {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn render(
    mode: PromptMode,
    question: &str,
    expected: &[String],
    predicted: &str,
) -> Result<String, CliError> {
    match mode {
        PromptMode::Single => match expected {
            [one] => Ok(fill(
                SINGLE_ANSWER_TEMPLATE,
                &[
                    ("question", question),
                    ("correct_answer", one),
                    ("predicted_answer", predicted),
                ],
            )),
            _ => Err(CliError::Usage(format!(
                "single mode takes exactly one expected answer, got {}",
                expected.len()
            ))),
        },
        PromptMode::Multiple => {
            if expected.is_empty() {
                return Err(CliError::Usage(
                    "multiple mode needs at least one expected answer".into(),
                ));
            }
            let joined = expected.join(ANSWER_SEPARATOR);
            Ok(fill(
                MULTIPLE_ANSWER_TEMPLATE,
                &[
                    ("question", question),
                    ("correct_answers", &joined),
                    ("predicted_answer", predicted),
                ],
            ))
        }
    }
}
