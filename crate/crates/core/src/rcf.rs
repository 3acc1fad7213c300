//! Reasoning control fields.
//!
//! Eleven integer scores in `0..=9` describe a reasoning trace: five
//! execution-control fields (how the search was driven) followed by six
//! process-quality fields (how good the steps were). They travel in two
//! formats:
//!
//! * the *control string*, appended to a user query:
//!   `"\n<control> search_depth: 8; ...; clarity_of_steps: 8 <control/>"`
//! * the *annotation record*, a JSON document produced by an annotator model
//!   with the scores split into `execution_control_scores` and
//!   `quality_evaluation_scores` plus a free-text `justification`.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};
use thiserror::Error;

/// Highest admissible score.
pub const MAX_SCORE: u8 = 9;
/// Number of control fields.
pub const FIELD_COUNT: usize = 11;
/// Opening tag of a control span.
pub const OPEN_TAG: &str = "<control>";
/// Closing tag of a control span. Note the self-closing form.
pub const CLOSE_TAG: &str = "<control/>";

const PAIR_SEPARATOR: &str = "; ";

/// One of the eleven control fields, in serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    SearchDepth,
    SearchBreadth,
    ErrorDetection,
    ErrorCorrection,
    StrategySwitching,
    Correctness,
    Efficiency,
    Completeness,
    Coherence,
    KnowledgeAccuracy,
    ClarityOfSteps,
}

impl Field {
    pub const ALL: [Field; FIELD_COUNT] = [
        Field::SearchDepth,
        Field::SearchBreadth,
        Field::ErrorDetection,
        Field::ErrorCorrection,
        Field::StrategySwitching,
        Field::Correctness,
        Field::Efficiency,
        Field::Completeness,
        Field::Coherence,
        Field::KnowledgeAccuracy,
        Field::ClarityOfSteps,
    ];

    pub const EXECUTION: [Field; 5] = [
        Field::SearchDepth,
        Field::SearchBreadth,
        Field::ErrorDetection,
        Field::ErrorCorrection,
        Field::StrategySwitching,
    ];

    pub const QUALITY: [Field; 6] = [
        Field::Correctness,
        Field::Efficiency,
        Field::Completeness,
        Field::Coherence,
        Field::KnowledgeAccuracy,
        Field::ClarityOfSteps,
    ];

    /// Machine-facing key used in every serialized format.
    pub fn key(self) -> &'static str {
        match self {
            Field::SearchDepth => "search_depth",
            Field::SearchBreadth => "search_breadth",
            Field::ErrorDetection => "error_detection",
            Field::ErrorCorrection => "error_correction",
            Field::StrategySwitching => "strategy_switching",
            Field::Correctness => "correctness",
            Field::Efficiency => "efficiency",
            Field::Completeness => "completeness",
            Field::Coherence => "coherence",
            Field::KnowledgeAccuracy => "knowledge_accuracy",
            Field::ClarityOfSteps => "clarity_of_steps",
        }
    }

    pub fn from_key(key: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.key() == key)
    }

    /// Position in serialization order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_execution(self) -> bool {
        self.index() < Field::EXECUTION.len()
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RcfError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("score for `{field}` is outside 0..=9: {value}")]
    ScoreOutOfRange { field: String, value: String },
    #[error("score for `{field}` is not an integer: {raw:?}")]
    NotAnInteger { field: String, raw: String },
    #[error("malformed control span: {0}")]
    MalformedSpan(String),
    #[error("no annotation record found")]
    NoRecordFound,
    #[error("annotation schema violation (missing: {missing:?}, extra: {extra:?}){}", detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default())]
    SchemaViolation {
        missing: Vec<String>,
        extra: Vec<String>,
        detail: Option<String>,
    },
}

impl RcfError {
    /// The field key the error is about, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            RcfError::MissingField(f) | RcfError::DuplicateField(f) | RcfError::UnknownField(f) => {
                Some(f)
            }
            RcfError::ScoreOutOfRange { field, .. } | RcfError::NotAnInteger { field, .. } => {
                Some(field)
            }
            _ => None,
        }
    }

    fn out_of_range(field: Field, value: impl ToString) -> Self {
        RcfError::ScoreOutOfRange {
            field: field.key().to_string(),
            value: value.to_string(),
        }
    }
}

/// A single score in `0..=9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Score(u8);

impl Score {
    pub fn new(value: u8) -> Result<Self, RcfError> {
        if value > MAX_SCORE {
            return Err(RcfError::ScoreOutOfRange {
                field: "score".into(),
                value: value.to_string(),
            });
        }
        Ok(Score(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Score {
    type Error = RcfError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Score::new(value)
    }
}

impl From<Score> for u8 {
    fn from(s: Score) -> u8 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The eleven scores, always valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ControlFields([u8; FIELD_COUNT]);

impl ControlFields {
    pub fn new(scores: [u8; FIELD_COUNT]) -> Result<Self, RcfError> {
        for field in Field::ALL {
            let value = scores[field.index()];
            if value > MAX_SCORE {
                return Err(RcfError::out_of_range(field, value));
            }
        }
        Ok(ControlFields(scores))
    }

    /// Every field set to `value`.
    pub fn uniform(value: u8) -> Result<Self, RcfError> {
        Self::new([value; FIELD_COUNT])
    }

    pub fn uniform_score(value: Score) -> Self {
        ControlFields([value.get(); FIELD_COUNT])
    }

    /// Builds from the five execution scores and the six quality scores.
    pub fn from_parts(execution: [u8; 5], quality: [u8; 6]) -> Result<Self, RcfError> {
        let mut scores = [0; FIELD_COUNT];
        scores[..5].copy_from_slice(&execution);
        scores[5..].copy_from_slice(&quality);
        Self::new(scores)
    }

    pub fn get(&self, field: Field) -> u8 {
        self.0[field.index()]
    }

    pub fn with(mut self, field: Field, value: u8) -> Result<Self, RcfError> {
        if value > MAX_SCORE {
            return Err(RcfError::out_of_range(field, value));
        }
        self.0[field.index()] = value;
        Ok(self)
    }

    pub fn scores(&self) -> [u8; FIELD_COUNT] {
        self.0
    }

    pub fn execution(&self) -> [u8; 5] {
        let mut out = [0; 5];
        out.copy_from_slice(&self.0[..5]);
        out
    }

    pub fn quality(&self) -> [u8; 6] {
        let mut out = [0; 6];
        out.copy_from_slice(&self.0[5..]);
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (Field, u8)> + '_ {
        Field::ALL.into_iter().map(move |f| (f, self.get(f)))
    }

    pub fn to_control_string(&self) -> String {
        serialize_control_string(self)
    }
}

impl fmt::Display for ControlFields {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_control_string(self))
    }
}

impl Serialize for ControlFields {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(FIELD_COUNT))?;
        for (field, value) in self.iter() {
            map.serialize_entry(field.key(), &value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ControlFields {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, i64>::deserialize(deserializer)?;
        let mut scores = [None; FIELD_COUNT];
        for (key, value) in raw {
            let field = Field::from_key(&key)
                .ok_or_else(|| D::Error::custom(RcfError::UnknownField(key.clone())))?;
            if !(0..=i64::from(MAX_SCORE)).contains(&value) {
                return Err(D::Error::custom(RcfError::out_of_range(field, value)));
            }
            scores[field.index()] = Some(value as u8);
        }
        collect_scores(scores).map_err(D::Error::custom)
    }
}

fn collect_scores(scores: [Option<u8>; FIELD_COUNT]) -> Result<ControlFields, RcfError> {
    let mut out = [0; FIELD_COUNT];
    for field in Field::ALL {
        out[field.index()] = scores[field.index()]
            .ok_or_else(|| RcfError::MissingField(field.key().to_string()))?;
    }
    ControlFields::new(out)
}

/// Renders the canonical control string, leading newline included.
pub fn serialize_control_string(fields: &ControlFields) -> String {
    let pairs: Vec<String> = fields
        .iter()
        .map(|(field, value)| format!("{}: {}", field.key(), value))
        .collect();
    format!("\n{OPEN_TAG} {} {CLOSE_TAG}", pairs.join(PAIR_SEPARATOR))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// Any whitespace around separators, any field order.
    #[default]
    Tolerant,
    /// Only the exact canonical rendering, preceded by a newline.
    Strict,
}

/// Parses the single control span found in `text` (tolerant mode).
pub fn parse_control_string(text: &str) -> Result<ControlFields, RcfError> {
    parse_control_string_with(text, ParseMode::Tolerant)
}

pub fn parse_control_string_with(text: &str, mode: ParseMode) -> Result<ControlFields, RcfError> {
    let (open, close) = locate_span(text)?;
    let inner = &text[open + OPEN_TAG.len()..close];

    let mut scores = [None; FIELD_COUNT];
    for segment in inner.split(';') {
        let segment = segment.trim();
        if segment.is_empty() {
            return Err(RcfError::MalformedSpan("empty `name: value` pair".into()));
        }
        let (key, raw) = segment
            .split_once(':')
            .ok_or_else(|| RcfError::MalformedSpan(format!("pair without `:`: {segment:?}")))?;
        let key = key.trim();
        let field = Field::from_key(key).ok_or_else(|| RcfError::UnknownField(key.to_string()))?;
        if scores[field.index()].is_some() {
            return Err(RcfError::DuplicateField(key.to_string()));
        }
        scores[field.index()] = Some(parse_score(field, raw.trim())?);
    }
    let fields = collect_scores(scores)?;

    if mode == ParseMode::Strict {
        let canonical = serialize_control_string(&fields);
        let span = &text[open..close + CLOSE_TAG.len()];
        let preceded_by_newline = text[..open].ends_with('\n');
        if !preceded_by_newline || span != &canonical[1..] {
            return Err(RcfError::MalformedSpan(
                "span is not in canonical form".into(),
            ));
        }
    }
    Ok(fields)
}

fn locate_span(text: &str) -> Result<(usize, usize), RcfError> {
    let opens: Vec<usize> = text.match_indices(OPEN_TAG).map(|(i, _)| i).collect();
    let closes: Vec<usize> = text.match_indices(CLOSE_TAG).map(|(i, _)| i).collect();
    match (opens.as_slice(), closes.as_slice()) {
        ([open], [close]) if open < close => Ok((*open, *close)),
        ([open], [close]) => Err(RcfError::MalformedSpan(format!(
            "closing tag at byte {close} precedes opening tag at byte {open}"
        ))),
        ([_], []) if text.contains("</control>") => Err(RcfError::MalformedSpan(
            "closing tag must be `<control/>`, found `</control>`".into(),
        )),
        (o, c) => Err(RcfError::MalformedSpan(format!(
            "expected exactly one `{OPEN_TAG}` and one `{CLOSE_TAG}`, found {} and {}",
            o.len(),
            c.len()
        ))),
    }
}

fn parse_score(field: Field, raw: &str) -> Result<u8, RcfError> {
    let digits = raw.strip_prefix('-').unwrap_or(raw);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(RcfError::NotAnInteger {
            field: field.key().to_string(),
            raw: raw.to_string(),
        });
    }
    match raw.parse::<i64>() {
        Ok(v) if (0..=i64::from(MAX_SCORE)).contains(&v) => Ok(v as u8),
        _ => Err(RcfError::out_of_range(field, raw)),
    }
}

const ANALYSIS: &str = "analysis";
const EXECUTION_KEY: &str = "execution_control_scores";
const QUALITY_KEY: &str = "quality_evaluation_scores";
const JUSTIFICATION_KEY: &str = "justification";

/// Structured annotator output: all eleven scores plus a justification.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnnotationRecord {
    fields: ControlFields,
    justification: String,
}

impl AnnotationRecord {
    pub fn new(fields: ControlFields, justification: impl Into<String>) -> Result<Self, RcfError> {
        let justification = justification.into();
        if justification.trim().is_empty() {
            return Err(RcfError::SchemaViolation {
                missing: vec![],
                extra: vec![],
                detail: Some("justification is empty".into()),
            });
        }
        Ok(AnnotationRecord {
            fields,
            justification,
        })
    }

    pub fn fields(&self) -> &ControlFields {
        &self.fields
    }

    pub fn justification(&self) -> &str {
        &self.justification
    }

    pub fn execution_control_scores(&self) -> [(Field, u8); 5] {
        Field::EXECUTION.map(|f| (f, self.fields.get(f)))
    }

    pub fn quality_evaluation_scores(&self) -> [(Field, u8); 6] {
        Field::QUALITY.map(|f| (f, self.fields.get(f)))
    }

    /// The record in its `{"analysis": {...}}` document layout.
    pub fn to_json(&self) -> Value {
        let group = |fields: &[Field]| -> Map<String, Value> {
            fields
                .iter()
                .map(|f| (f.key().to_string(), json!(self.fields.get(*f))))
                .collect()
        };
        json!({
            ANALYSIS: {
                EXECUTION_KEY: group(&Field::EXECUTION),
                QUALITY_KEY: group(&Field::QUALITY),
                JUSTIFICATION_KEY: self.justification,
            }
        })
    }

    /// Validates a parsed document against the record schema.
    pub fn from_value(value: &Value) -> Result<Self, RcfError> {
        let mut missing = Vec::new();
        let mut extra = Vec::new();

        let root = value.as_object().ok_or_else(|| not_an_object("document"))?;
        check_keys(root, &[ANALYSIS], "", &mut missing, &mut extra);
        let Some(analysis) = root.get(ANALYSIS) else {
            return Err(RcfError::SchemaViolation {
                missing,
                extra,
                detail: None,
            });
        };
        let analysis = analysis.as_object().ok_or_else(|| not_an_object(ANALYSIS))?;
        check_keys(
            analysis,
            &[EXECUTION_KEY, QUALITY_KEY, JUSTIFICATION_KEY],
            ANALYSIS,
            &mut missing,
            &mut extra,
        );

        let mut groups = Vec::new();
        for (key, fields) in [
            (EXECUTION_KEY, &Field::EXECUTION[..]),
            (QUALITY_KEY, &Field::QUALITY[..]),
        ] {
            let Some(group) = analysis.get(key) else {
                continue;
            };
            let path = format!("{ANALYSIS}.{key}");
            let group = group.as_object().ok_or_else(|| not_an_object(&path))?;
            let keys: Vec<&str> = fields.iter().map(|f| f.key()).collect();
            check_keys(group, &keys, &path, &mut missing, &mut extra);
            groups.push((group, fields));
        }

        if !missing.is_empty() || !extra.is_empty() {
            return Err(RcfError::SchemaViolation {
                missing,
                extra,
                detail: None,
            });
        }

        let mut scores = [None; FIELD_COUNT];
        for (group, fields) in groups {
            for &field in fields {
                scores[field.index()] = Some(json_score(field, &group[field.key()])?);
            }
        }
        let fields = collect_scores(scores)?;

        let justification = match &analysis[JUSTIFICATION_KEY] {
            Value::String(s) => s.clone(),
            other => {
                return Err(RcfError::SchemaViolation {
                    missing: vec![],
                    extra: vec![],
                    detail: Some(format!("justification must be a string, got {other}")),
                })
            }
        };
        AnnotationRecord::new(fields, justification)
    }
}

impl Serialize for AnnotationRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AnnotationRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        AnnotationRecord::from_value(&value).map_err(D::Error::custom)
    }
}

fn not_an_object(path: &str) -> RcfError {
    RcfError::SchemaViolation {
        missing: vec![],
        extra: vec![],
        detail: Some(format!("`{path}` must be an object")),
    }
}

fn check_keys(
    object: &Map<String, Value>,
    expected: &[&str],
    prefix: &str,
    missing: &mut Vec<String>,
    extra: &mut Vec<String>,
) {
    let path = |key: &str| {
        if prefix.is_empty() {
            key.to_string()
        } else {
            format!("{prefix}.{key}")
        }
    };
    for key in expected {
        if !object.contains_key(*key) {
            missing.push(path(key));
        }
    }
    for key in object.keys() {
        if !expected.contains(&key.as_str()) {
            extra.push(path(key));
        }
    }
}

fn json_score(field: Field, value: &Value) -> Result<u8, RcfError> {
    if let Some(v) = value.as_i64() {
        if (0..=i64::from(MAX_SCORE)).contains(&v) {
            return Ok(v as u8);
        }
        return Err(RcfError::out_of_range(field, v));
    }
    if value.is_u64() {
        return Err(RcfError::out_of_range(field, value));
    }
    Err(RcfError::NotAnInteger {
        field: field.key().to_string(),
        raw: value.to_string(),
    })
}

/// Finds and validates the first top-level JSON object carrying an
/// `analysis` key, ignoring any prose around it.
pub fn parse_annotation_record(text: &str) -> Result<AnnotationRecord, RcfError> {
    let mut pos = 0;
    while let Some(rel) = text[pos..].find('{') {
        let start = pos + rel;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(value)) => {
                if value.get(ANALYSIS).is_some() {
                    return AnnotationRecord::from_value(&value);
                }
                pos = start + stream.byte_offset();
            }
            _ => pos = start + 1,
        }
    }
    Err(RcfError::NoRecordFound)
}

/// Drops the justification.
pub fn to_control_fields(record: &AnnotationRecord) -> ControlFields {
    record.fields
}
