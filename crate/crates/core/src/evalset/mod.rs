//! Seeded question sampling, reference alignment and report rendering for
//! translator evaluation.
//!
//! The generator and shuffle are pinned down exactly so a seed selects the
//! same sample in any implementation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mtmetrics::{evaluate_pairs, MetricError, MetricReport};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One splitmix64 step: returns (output, next state).
pub fn prng_next(state: u64) -> (u64, u64) {
    let next = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = next;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31), next)
}

#[derive(Debug, Clone)]
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        SplitMix { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        let (v, s) = prng_next(self.state);
        self.state = s;
        v
    }

    /// Unbiased integer in `0..bound` by rejection. Panics on `bound == 0`.
    pub fn uniform_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        // Values below this would over-represent small residues.
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Moves a uniform random selection of `n` elements to the front, in
    /// selection order.
    pub fn partial_shuffle<T>(&mut self, items: &mut [T], n: usize) {
        let len = items.len();
        for i in 0..n.min(len) {
            let j = i + self.uniform_below((len - i) as u64) as usize;
            items.swap(i, j);
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        self.partial_shuffle(items, n);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuestionItem {
    pub subject: String,
    pub item_id: String,
    pub text: String,
}

impl QuestionItem {
    pub fn key(&self) -> (&str, &str) {
        (&self.subject, &self.item_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub en: QuestionItem,
    pub ar_reference: String,
}

/// A key present in the sample but absent from the references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingKey {
    pub subject: String,
    pub item_id: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("asked for {n} items from a pool of {available}")]
    NTooLarge { n: usize, available: usize },
    #[error("reference key ({subject}, {item_id}) appears more than once")]
    DuplicateKey { subject: String, item_id: String },
    #[error("{pairs} aligned pairs but {outputs} system outputs")]
    LengthMismatch { pairs: usize, outputs: usize },
    #[error("reference for ({subject}, {item_id}) is empty")]
    EmptyReference { subject: String, item_id: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub fn sample_questions(items: &[QuestionItem], n: usize, seed: u64) -> Result<Vec<QuestionItem>, EvalError> {
    if n > items.len() {
        return Err(EvalError::NTooLarge {
            n,
            available: items.len(),
        });
    }
    let mut pool = items.to_vec();
    SplitMix::new(seed).partial_shuffle(&mut pool, n);
    pool.truncate(n);
    Ok(pool)
}

/// Pairs each sampled item with the reference sharing its (subject, id).
pub fn align_references(
    sample: &[QuestionItem],
    ar_items: &[QuestionItem],
) -> Result<(Vec<AlignedPair>, Vec<MissingKey>), EvalError> {
    let mut index: HashMap<(&str, &str), &QuestionItem> = HashMap::with_capacity(ar_items.len());
    for it in ar_items {
        if index.insert(it.key(), it).is_some() {
            return Err(EvalError::DuplicateKey {
                subject: it.subject.clone(),
                item_id: it.item_id.clone(),
            });
        }
    }
    let mut pairs = Vec::new();
    let mut misses = Vec::new();
    for q in sample {
        match index.get(&q.key()) {
            Some(ar) if ar.text.is_empty() => {
                return Err(EvalError::EmptyReference {
                    subject: q.subject.clone(),
                    item_id: q.item_id.clone(),
                })
            }
            Some(ar) => pairs.push(AlignedPair {
                en: q.clone(),
                ar_reference: ar.text.clone(),
            }),
            None => misses.push(MissingKey {
                subject: q.subject.clone(),
                item_id: q.item_id.clone(),
            }),
        }
    }
    Ok((pairs, misses))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    #[serde(flatten)]
    pub metrics: MetricReport,
    pub row: String,
}

/// Scores system outputs against the aligned references.
pub fn build_report(pairs: &[AlignedPair], outputs: &[String], system_name: &str) -> Result<EvalReport, EvalError> {
    if pairs.len() != outputs.len() {
        return Err(EvalError::LengthMismatch {
            pairs: pairs.len(),
            outputs: outputs.len(),
        });
    }
    let scored: Vec<(String, String)> = outputs
        .iter()
        .cloned()
        .zip(pairs.iter().map(|p| p.ar_reference.clone()))
        .collect();
    let metrics = evaluate_pairs(&scored)?;
    Ok(EvalReport {
        system: system_name.to_string(),
        row: metrics.table_row(system_name),
        metrics,
    })
}
