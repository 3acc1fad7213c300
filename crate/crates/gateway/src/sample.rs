//! Sampling many traces per task and keeping the correct ones.

use std::collections::HashMap;

use futures::future::join_all;

use rcf_core::chat::SampledTrace;
use rcf_core::grading::Grader;
use rcf_core::harness::{build_prompt, AblationCondition, BenchmarkItem};

use crate::audit::RequestKey;
use crate::{ChatClient, GatewayError};

pub const SAMPLE_PURPOSE: &str = "sample";
pub const DEFAULT_SAMPLING_TEMPERATURE: f64 = 1.0;

/// `n` traces for one task in request-index order. The first failure is
/// returned once all requests have settled.
pub async fn sample_responses(
    client: &ChatClient,
    item: &BenchmarkItem,
    n: u32,
    temperature: f64,
) -> Result<Vec<SampledTrace>, GatewayError> {
    sample_batch(client, std::slice::from_ref(item), n, temperature)
        .await
        .into_iter()
        .collect()
}

/// `n` traces per item, ordered by (item, sample index).
pub async fn sample_batch(
    client: &ChatClient,
    items: &[BenchmarkItem],
    n: u32,
    temperature: f64,
) -> Vec<Result<SampledTrace, GatewayError>> {
    if n == 0 {
        return Vec::new();
    }
    let jobs = items.iter().flat_map(|item| {
        let mut req = build_prompt(item, &AblationCondition::NoControl);
        req.temperature = temperature;
        (0..n).map(move |i| {
            let req = req.clone();
            let key = RequestKey::new(SAMPLE_PURPOSE, item.id.clone(), i);
            async move { client.sample(&req, &key).await }
        })
    });
    join_all(jobs).await
}

/// Keeps the traces graded correct against their task's reference; traces
/// whose task has no reference are dropped.
pub fn filter_correct(
    samples: Vec<SampledTrace>,
    references: &HashMap<String, String>,
    grader: &dyn Grader,
) -> Vec<SampledTrace> {
    samples
        .into_iter()
        .filter(|s| {
            references
                .get(&s.query_id)
                .is_some_and(|r| grader.grade(&s.completion, r).is_correct())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rcf_core::grading::BoxedAnswerGrader;

    fn refs() -> HashMap<String, String> {
        HashMap::from([("q".to_string(), "2".to_string())])
    }

    #[test]
    fn keeps_only_correct() {
        let samples = vec![
            SampledTrace::from_completion("q", 0, "\\boxed{2}"),
            SampledTrace::from_completion("q", 1, "\\boxed{3}"),
            SampledTrace::from_completion("q", 2, "two"),
            SampledTrace::from_completion("q", 3, "so \\boxed{2.0}"),
            SampledTrace::from_completion("other", 0, "\\boxed{2}"),
        ];
        let kept = filter_correct(samples, &refs(), &BoxedAnswerGrader);
        assert_eq!(kept.iter().map(|t| t.sample_index).collect::<Vec<_>>(), vec![0, 3]);
        let again = filter_correct(kept.clone(), &refs(), &BoxedAnswerGrader);
        assert_eq!(again, kept);
        assert!(filter_correct(vec![], &refs(), &BoxedAnswerGrader).is_empty());
    }
}
