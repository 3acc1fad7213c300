//! Turns annotated (query, trace, scores) triples into chat-format training
//! records, splits them by query and summarizes them.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{ChatMessage, Role};
use crate::rcf::{parse_control_string, AnnotationRecord, ControlFields, Field, RcfError, FIELD_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("query {query_id}: samples {sample_indices:?} share a control string but differ in trace")]
    ConflictWithoutControl {
        query_id: String,
        sample_indices: Vec<u32>,
    },
    #[error("query {query_id} sample {sample_index}: trace was not graded correct")]
    UngradedSample { query_id: String, sample_index: u32 },
    #[error("query {query_id} sample {sample_index}: empty trace")]
    EmptyTrace { query_id: String, sample_index: u32 },
    #[error("ratios must be in [0, 1] and sum to 1, got ({0}, {1})")]
    InvalidRatios(f64, f64),
    #[error("record has no {0} message")]
    MissingMessage(&'static str),
    #[error(transparent)]
    Control(#[from] RcfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Main,
    SearchTask,
    Extended,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Main, Subset::SearchTask, Subset::Extended];
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::Main => "main",
            Subset::SearchTask => "search_task",
            Subset::Extended => "extended",
        })
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub query_id: String,
    pub query: String,
    pub trace: String,
    pub annotation: AnnotationRecord,
    pub source: Subset,
    pub sample_index: u32,
    /// Set by the correctness filter; only correct traces become records.
    #[serde(default = "yes")]
    pub graded_correct: bool,
}

impl AnnotatedSample {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !self.graded_correct {
            return Err(DatasetError::UngradedSample {
                query_id: self.query_id.clone(),
                sample_index: self.sample_index,
            });
        }
        if self.trace.trim().is_empty() {
            return Err(DatasetError::EmptyTrace {
                query_id: self.query_id.clone(),
                sample_index: self.sample_index,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub source: Subset,
    pub query_id: String,
    pub sample_index: u32,
    pub scores: ControlFields,
    #[serde(default)]
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub messages: Vec<ChatMessage>,
    pub metadata: RecordMetadata,
}

impl TrainingRecord {
    pub fn new(sample: &AnnotatedSample) -> Self {
        let fields = *sample.annotation.fields();
        TrainingRecord {
            messages: vec![
                ChatMessage::user(format!("{}{}", sample.query, fields.to_control_string())),
                ChatMessage::assistant(sample.trace.clone()),
            ],
            metadata: RecordMetadata {
                source: sample.source,
                query_id: sample.query_id.clone(),
                sample_index: sample.sample_index,
                scores: fields,
                justification: sample.annotation.justification().to_string(),
            },
        }
    }

    fn message(&self, role: Role) -> Option<&str> {
        self.messages.iter().find(|m| m.role == role).map(|m| m.content.as_str())
    }

    pub fn user(&self) -> Result<&str, DatasetError> {
        self.message(Role::User).ok_or(DatasetError::MissingMessage("user"))
    }

    pub fn assistant(&self) -> Result<&str, DatasetError> {
        self.message(Role::Assistant)
            .ok_or(DatasetError::MissingMessage("assistant"))
    }

    /// Scores read back from the user message.
    pub fn control_fields(&self) -> Result<ControlFields, DatasetError> {
        Ok(parse_control_string(self.user()?)?)
    }
}

/// One record per sample, deduplicated on (query, trace), ordered by
/// (query id, sample index).
pub fn build_records(samples: &[AnnotatedSample]) -> Result<Vec<TrainingRecord>, DatasetError> {
    for s in samples {
        s.validate()?;
    }
    let mut ordered: Vec<&AnnotatedSample> = samples.iter().collect();
    ordered.sort_by(|a, b| (&a.query_id, a.sample_index).cmp(&(&b.query_id, b.sample_index)));

    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut by_control: HashMap<(&str, ControlFields), &AnnotatedSample> = HashMap::new();
    let mut out = Vec::new();
    for s in ordered {
        if !seen.insert((s.query.as_str(), s.trace.as_str())) {
            continue;
        }
        let key = (s.query.as_str(), *s.annotation.fields());
        if let Some(prev) = by_control.get(&key) {
            return Err(DatasetError::ConflictWithoutControl {
                query_id: s.query_id.clone(),
                sample_indices: vec![prev.sample_index, s.sample_index],
            });
        }
        by_control.insert(key, s);
        out.push(TrainingRecord::new(s));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<TrainingRecord>,
    pub validation: Vec<TrainingRecord>,
}

/// Splits by query id so every record of a query lands on the same side.
pub fn split_dataset(
    records: &[TrainingRecord],
    ratios: (f64, f64),
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    let (t, v) = ratios;
    let in_unit = |x: f64| (0.0..=1.0).contains(&x);
    if !(in_unit(t) && in_unit(v) && (t + v - 1.0).abs() < 1e-9) {
        return Err(DatasetError::InvalidRatios(t, v));
    }
    let ids: BTreeSet<&str> = records.iter().map(|r| r.metadata.query_id.as_str()).collect();
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (t * ids.len() as f64).round() as usize;
    let train_ids: HashSet<&str> = ids[..n_train.min(ids.len())].iter().copied().collect();
    let (train, validation) = records
        .iter()
        .cloned()
        .partition(|r| train_ids.contains(r.metadata.query_id.as_str()));
    Ok(DatasetSplit { train, validation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub total: usize,
    pub queries: usize,
    pub per_subset: BTreeMap<Subset, usize>,
    /// For each field, counts of records scoring 0 through 9.
    pub histograms: BTreeMap<String, [usize; 10]>,
    /// Whitespace-token length of the assistant trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_length: Option<LengthStats>,
    /// Record counts keyed by the lower edge of a power-of-two length bucket.
    pub length_buckets: BTreeMap<usize, usize>,
}

pub fn summarize(records: &[TrainingRecord]) -> DatasetSummary {
    let mut per_subset: BTreeMap<Subset, usize> = Subset::ALL.iter().map(|s| (*s, 0)).collect();
    let mut histograms: BTreeMap<String, [usize; 10]> =
        Field::ALL.iter().map(|f| (f.key().to_string(), [0; 10])).collect();
    let mut lengths = Vec::with_capacity(records.len());
    let mut queries = HashSet::new();
    for r in records {
        *per_subset.entry(r.metadata.source).or_default() += 1;
        queries.insert(r.metadata.query_id.as_str());
        for (field, score) in r.metadata.scores.iter() {
            if let Some(h) = histograms.get_mut(field.key()) {
                h[usize::from(score)] += 1;
            }
        }
        lengths.push(r.assistant().map(|t| t.split_whitespace().count()).unwrap_or(0));
    }
    debug_assert_eq!(histograms.len(), FIELD_COUNT);
    let mut length_buckets = BTreeMap::new();
    for &l in &lengths {
        let lower = if l == 0 { 0 } else { 1 << l.ilog2() };
        *length_buckets.entry(lower).or_default() += 1;
    }
    lengths.sort_unstable();
    let trace_length = (!lengths.is_empty()).then(|| {
        let n = lengths.len();
        let median = if n % 2 == 1 {
            lengths[n / 2] as f64
        } else {
            (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0
        };
        LengthStats {
            min: lengths[0],
            max: lengths[n - 1],
            mean: lengths.iter().sum::<usize>() as f64 / n as f64,
            median,
        }
    });
    DatasetSummary {
        total: records.len(),
        queries: queries.len(),
        per_subset,
        histograms,
        trace_length,
        length_buckets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(qid: &str, idx: u32, trace: &str, score: u8) -> AnnotatedSample {
        AnnotatedSample {
            query_id: qid.into(),
            query: format!("question {qid}"),
            trace: trace.into(),
            annotation: AnnotationRecord::new(ControlFields::uniform(score).unwrap(), "ok").unwrap(),
            source: Subset::Main,
            sample_index: idx,
            graded_correct: true,
        }
    }

    #[test]
    fn conflicting_traces_are_kept() {
        let recs = build_records(&[sample("q", 1, "deep", 9), sample("q", 0, "shallow", 2)]).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].metadata.sample_index, 0);
        let strip = |r: &TrainingRecord| r.user().unwrap().split("\n<control>").next().unwrap().to_string();
        assert_eq!(strip(&recs[0]), strip(&recs[1]));
        assert_ne!(recs[0].user().unwrap(), recs[1].user().unwrap());
        for r in &recs {
            assert!(r.user().unwrap().ends_with("<control/>"));
            assert_eq!(r.control_fields().unwrap(), r.metadata.scores);
            assert!(!r.user().unwrap().contains("ok"));
        }
    }

    #[test]
    fn duplicates_are_dropped() {
        let recs = build_records(&[sample("q", 0, "t", 5), sample("q", 0, "t", 5)]).unwrap();
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn same_control_different_trace_conflicts() {
        let err = build_records(&[sample("q7", 0, "a", 5), sample("q7", 3, "b", 5)]).unwrap_err();
        assert_eq!(
            err,
            DatasetError::ConflictWithoutControl {
                query_id: "q7".into(),
                sample_indices: vec![0, 3]
            }
        );
    }

    #[test]
    fn rejects_unfiltered_or_empty() {
        let mut s = sample("q", 0, "t", 5);
        s.graded_correct = false;
        assert!(matches!(build_records(&[s]), Err(DatasetError::UngradedSample { .. })));
        assert!(matches!(
            build_records(&[sample("q", 0, "  ", 5)]),
            Err(DatasetError::EmptyTrace { .. })
        ));
    }

    fn ten_queries() -> Vec<TrainingRecord> {
        let samples: Vec<AnnotatedSample> = (0..10)
            .flat_map(|q| (0..3).map(move |i| sample(&format!("q{q}"), i, &format!("trace {i}"), i as u8)))
            .collect();
        build_records(&samples).unwrap()
    }

    #[test]
    fn split_by_query() {
        let recs = ten_queries();
        let a = split_dataset(&recs, (0.8, 0.2), 1).unwrap();
        let b = split_dataset(&recs, (0.8, 0.2), 1).unwrap();
        assert_eq!(a, b);
        let ids = |v: &[TrainingRecord]| -> BTreeSet<String> { v.iter().map(|r| r.metadata.query_id.clone()).collect() };
        assert_eq!(ids(&a.train).len(), 8);
        assert_eq!(ids(&a.validation).len(), 2);
        assert!(ids(&a.train).is_disjoint(&ids(&a.validation)));
        assert_eq!(a.train.len(), 24);

        let all = split_dataset(&recs, (1.0, 0.0), 9).unwrap();
        assert!(all.validation.is_empty());
        assert!(split_dataset(&recs, (0.5, 0.4), 1).is_err());
    }

    #[test]
    fn summary_counts() {
        let empty = summarize(&[]);
        assert_eq!(empty.total, 0);
        assert!(empty.per_subset.values().all(|&c| c == 0));
        assert!(empty.histograms.values().all(|h| h.iter().all(|&c| c == 0)));
        assert!(empty.trace_length.is_none());

        let recs = ten_queries();
        let s = summarize(&recs);
        assert_eq!(s.per_subset[&Subset::Main], 30);
        assert_eq!(s.queries, 10);
        for h in s.histograms.values() {
            assert_eq!(h.iter().sum::<usize>(), 30);
            assert_eq!(h[0], 10);
        }
        assert_eq!(s.length_buckets.values().sum::<usize>(), 30);
        assert_eq!(s.trace_length.as_ref().unwrap().max, 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn records_round_trip_and_never_conflict(
                rows in proptest::collection::vec((0u8..4, 0u8..=9, "[a-z ]{1,12}"), 1..30)
            ) {
                let samples: Vec<AnnotatedSample> = rows
                    .iter()
                    .enumerate()
                    .map(|(i, (q, s, t))| sample(&format!("q{q}"), i as u32, &format!("{t}#{s}"), *s))
                    .collect();
                if let Ok(recs) = build_records(&samples) {
                    let mut seen = HashMap::new();
                    for r in &recs {
                        prop_assert_eq!(r.control_fields().unwrap(), r.metadata.scores);
                        let key = (r.metadata.query_id.clone(), r.metadata.scores);
                        if let Some(prev) = seen.insert(key, r.assistant().unwrap().to_string()) {
                            prop_assert_eq!(prev, r.assistant().unwrap());
                        }
                    }
                    let keys: Vec<_> = recs.iter().map(|r| (r.metadata.query_id.clone(), r.metadata.sample_index)).collect();
                    let mut sorted = keys.clone();
                    sorted.sort();
                    prop_assert_eq!(keys, sorted);
                }
            }

            #[test]
            fn split_is_exclusive(seed in any::<u64>(), ratio in 0.0f64..=1.0) {
                let recs = ten_queries();
                let s = split_dataset(&recs, (ratio, 1.0 - ratio), seed).unwrap();
                prop_assert_eq!(s.train.len() + s.validation.len(), recs.len());
                let t: HashSet<_> = s.train.iter().map(|r| r.metadata.query_id.clone()).collect();
                prop_assert!(s.validation.iter().all(|r| !t.contains(&r.metadata.query_id)));
            }
        }
    }
}
