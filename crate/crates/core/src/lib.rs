pub mod api;
pub mod chat;
pub mod dataset;
pub mod expr;
pub mod grading;
pub mod harness;
pub mod jsonl;
pub mod rcf;
pub mod report;
pub mod sim;
pub mod synth;
