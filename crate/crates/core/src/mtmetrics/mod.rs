//! Reference-based translation metrics written from scratch: corpus BLEU
//! over 13a tokens, corpus chrF++, and mean ROUGE-L F1.
//!
//! All scores are on a 0..100 scale.

pub mod bleu;
pub mod chrf;
pub mod rouge;
pub mod tokenize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu_corpus, BleuOptions, Smoothing};
pub use chrf::chrf_pp;
pub use rouge::{rouge_l_corpus, rouge_l_f1};
pub use tokenize::tokenize_13a;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("hypothesis and reference counts differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("max n-gram order {0} outside 1..=9")]
    BadOrder(usize),
}

pub(crate) fn check_corpus(hyps: &[String], refs: &[String]) -> Result<(), MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch(hyps.len(), refs.len()));
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub rouge_l: f64,
    pub chrf_pp: f64,
    pub n_pairs: usize,
}

impl MetricReport {
    /// One table row, `system & BLEU & ROUGE-L & chrF++ \\`, one decimal each.
    pub fn table_row(&self, system: &str) -> String {
        format!(
            "{system} & {:.1} & {:.1} & {:.1} \\\\",
            self.bleu, self.rouge_l, self.chrf_pp
        )
    }

    /// Single-line human summary.
    pub fn summary_line(&self) -> String {
        format!(
            "BLEU = {:.1} | ROUGE-L = {:.1} | chrF++ = {:.1} | n = {}",
            self.bleu, self.rouge_l, self.chrf_pp, self.n_pairs
        )
    }
}

/// Scores (hypothesis, reference) pairs with all three metrics.
pub fn evaluate_pairs(pairs: &[(String, String)]) -> Result<MetricReport, MetricError> {
    let (hyps, refs): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
    evaluate(&hyps, &refs)
}

/// Same as [`evaluate_pairs`] over two aligned lists.
pub fn evaluate(hyps: &[String], refs: &[String]) -> Result<MetricReport, MetricError> {
    check_corpus(hyps, refs)?;
    Ok(MetricReport {
        bleu: bleu_corpus(hyps, refs, BleuOptions::default())?,
        rouge_l: rouge_l_corpus(hyps, refs),
        chrf_pp: chrf_pp(hyps, refs)?,
        n_pairs: hyps.len(),
    })
}
