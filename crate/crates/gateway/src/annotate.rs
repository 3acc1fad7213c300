//! Scoring a reasoning trace with an annotator model.

use rcf_core::chat::{ChatMessage, ChatRequest};
use rcf_core::rcf::{parse_annotation_record, AnnotationRecord};

use crate::audit::RequestKey;
use crate::{ChatClient, GatewayError};

pub const ANNOTATION_PURPOSE: &str = "annotate";

const PROMPT_HEAD: &str = r#"Read the question and the reasoning trace below, then score the trace on eleven attributes. Every score is an integer from 0 (absent or very poor) to 9 (excellent).

How the search was driven:
- search_depth: how far a line of attack is pursued before it is dropped.
- search_breadth: how many distinct approaches are weighed.
- error_detection: how reliably the trace notices its own mistakes.
- error_correction: how well noticed mistakes are repaired, including by going back.
- strategy_switching: how readily the trace changes approach when one stalls.

How good the steps are:
- correctness: whether the conclusion is right.
- efficiency: how little effort is wasted.
- completeness: whether every condition of the question is handled.
- coherence: whether each step follows from the previous ones.
- knowledge_accuracy: whether the facts and rules used are true.
- clarity_of_steps: how easy the steps are to follow.

Reply with a single JSON object and nothing else, shaped like this:
{"analysis": {"execution_control_scores": {"search_depth": 0, "search_breadth": 0, "error_detection": 0, "error_correction": 0, "strategy_switching": 0}, "quality_evaluation_scores": {"correctness": 0, "efficiency": 0, "completeness": 0, "coherence": 0, "knowledge_accuracy": 0, "clarity_of_steps": 0}, "justification": "a short explanation"}}

Question:
"#;

const PROMPT_MIDDLE: &str = "\n\nReasoning trace:\n";

pub fn annotation_prompt(query: &str, trace: &str) -> String {
    format!("{PROMPT_HEAD}{query}{PROMPT_MIDDLE}{trace}")
}

fn corrective_message(error: &str) -> String {
    format!(
        "Your reply could not be read ({error}). Answer again with only the JSON object, \
         using exactly the eleven keys shown and integer scores from 0 to 9."
    )
}

/// Asks at temperature 0 and re-asks once, with the parse error quoted, if
/// the reply is not a valid record.
pub async fn annotate_trace(
    client: &ChatClient,
    task_id: &str,
    query: &str,
    trace: &str,
) -> Result<AnnotationRecord, GatewayError> {
    if trace.trim().is_empty() {
        return Err(GatewayError::InvalidRequest("trace is empty".into()));
    }
    let prompt = annotation_prompt(query, trace);
    let mut req = ChatRequest::new(vec![ChatMessage::user(prompt.clone())]);
    req.temperature = 0.0;

    let first = client
        .complete(&req, &RequestKey::new(ANNOTATION_PURPOSE, task_id, 0))
        .await?
        .text;
    let err = match parse_annotation_record(&first) {
        Ok(record) => return Ok(record),
        Err(e) => e.to_string(),
    };
    tracing::warn!(task = task_id, error = %err, "annotation unreadable, asking again");
    req.messages = vec![
        ChatMessage::user(prompt),
        ChatMessage::assistant(first.clone()),
        ChatMessage::user(corrective_message(&err)),
    ];
    let second = client
        .complete(&req, &RequestKey::new(ANNOTATION_PURPOSE, task_id, 1))
        .await?
        .text;
    parse_annotation_record(&second).map_err(|e| GatewayError::AnnotationParseFailure {
        replies: vec![first, second],
        error: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_embeds_query_and_trace() {
        let p = annotation_prompt("What is {trace}?", "step one");
        assert!(p.contains("Question:\nWhat is {trace}?\n\nReasoning trace:\nstep one"));
        assert!(p.contains("clarity_of_steps"));
    }
}
