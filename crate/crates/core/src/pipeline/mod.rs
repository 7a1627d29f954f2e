//! Corpus construction: translation and judge prompts, verdict filtering,
//! bilingual pairing, code-sample exclusion and corpus mixing.
//!
//! Corpora are JSON lines, one flat object of string fields per line.

pub mod codefilter;
pub mod corpus;
pub mod judge;
pub mod mix;
pub mod prompts;
pub mod state;
pub mod tuples;

use std::path::PathBuf;

use thiserror::Error;

use crate::inference::BatchError;
pub use codefilter::{filter_code_samples, is_code_like, CodeHeuristic};
pub use judge::{filter_parallel_corpus, parse_verdict, FilterStats, ParallelPair, Verdict};
pub use mix::{mix_corpora, Manifest, MixSource};
pub use prompts::{render_judge_prompt, render_translation_prompt, Template};
pub use state::{JobState, JobStore, StateError};
pub use tuples::{build_bilingual_tuples, translate_records, translate_texts, BilingualTuple, InstructionRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("text to render is empty")]
    EmptyText,
    #[error("{what}: lengths differ ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("record {index}: field `{field}` is empty")]
    EmptyField { index: usize, field: &'static str },
    #[error("{source_name}:{line}: {reason}")]
    MalformedLine {
        source_name: String,
        line: usize,
        reason: String,
    },
    #[error("source {source_name}: expected {expected} records, found {observed}")]
    CountMismatch {
        source_name: String,
        expected: usize,
        observed: usize,
    },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    State(#[from] StateError),
}
