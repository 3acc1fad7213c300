use std::fs::File;
use std::io::BufReader;

use rcf_core::grading::{grade, load_grade_vectors};

#[test]
fn fixture_vectors_grade_as_expected() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/grade_vectors.jsonl");
    let vectors = load_grade_vectors(BufReader::new(File::open(path).unwrap())).unwrap();
    assert!(vectors.len() >= 20);
    let failures: Vec<String> = vectors
        .iter()
        .filter(|v| grade(&v.completion, &v.reference).is_correct() != v.expected)
        .map(|v| format!("{}: {:?} vs {:?}", v.note, v.completion, v.reference))
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}
