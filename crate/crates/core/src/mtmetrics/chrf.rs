//! chrF++: character 1..6-grams plus word 1..2-grams, beta = 2.
//!
//! Counts are summed over the corpus. Precision and recall are averaged
//! over the orders where both sides produced n-grams, then combined into a
//! single F-beta.

use std::collections::HashMap;
use std::hash::Hash;

use super::tokenize::is_split_space;
use super::{check_corpus, MetricError};
use crate::par;

pub const CHAR_ORDER: usize = 6;
pub const WORD_ORDER: usize = 2;
pub const BETA: f64 = 2.0;
const ORDERS: usize = CHAR_ORDER + WORD_ORDER;

const PUNCTUATION: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Per-order `[hyp count, ref count, matches]`, char orders first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChrfStats(pub [[u64; 3]; ORDERS]);

impl ChrfStats {
    pub fn zero() -> Self {
        ChrfStats([[0; 3]; ORDERS])
    }

    pub fn add(&mut self, other: &ChrfStats) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }

    pub fn score(&self) -> f64 {
        let mut prec = 0.0;
        let mut rec = 0.0;
        let mut effective = 0usize;
        for &[hyp, reference, matched] in &self.0 {
            if hyp > 0 && reference > 0 {
                prec += matched as f64 / hyp as f64;
                rec += matched as f64 / reference as f64;
                effective += 1;
            }
        }
        if effective == 0 {
            return 0.0;
        }
        prec /= effective as f64;
        rec /= effective as f64;
        if prec + rec == 0.0 {
            return 0.0;
        }
        let b2 = BETA * BETA;
        100.0 * (1.0 + b2) * prec * rec / (b2 * prec + rec)
    }
}

/// Whitespace-split words with one leading or trailing ASCII punctuation
/// mark peeled off.
pub(crate) fn words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for w in text.split(is_split_space).filter(|w| !w.is_empty()) {
        let mut chars = w.chars();
        let first = chars.next().expect("non-empty");
        let Some(last) = chars.next_back() else {
            out.push(w);
            continue;
        };
        if PUNCTUATION.contains(last) {
            let cut = w.len() - last.len_utf8();
            out.push(&w[..cut]);
            out.push(&w[cut..]);
        } else if PUNCTUATION.contains(first) {
            let cut = first.len_utf8();
            out.push(&w[..cut]);
            out.push(&w[cut..]);
        } else {
            out.push(w);
        }
    }
    out
}

fn counts<T: Hash + Eq, I: IntoIterator<Item = T>>(items: I) -> HashMap<T, u64> {
    let mut m = HashMap::new();
    for x in items {
        *m.entry(x).or_insert(0) += 1;
    }
    m
}

fn match_stats<T: Hash + Eq>(h: &HashMap<T, u64>, r: &HashMap<T, u64>) -> [u64; 3] {
    let matched = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    [h.values().sum(), r.values().sum(), matched]
}

pub fn segment_stats(hyp: &str, reference: &str) -> ChrfStats {
    let hc: Vec<char> = hyp.chars().filter(|c| !is_split_space(*c)).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !is_split_space(*c)).collect();
    let hw = words(hyp);
    let rw = words(reference);
    let mut stats = ChrfStats::zero();
    for n in 1..=CHAR_ORDER {
        stats.0[n - 1] = match_stats(&counts(hc.windows(n)), &counts(rc.windows(n)));
    }
    for n in 1..=WORD_ORDER {
        stats.0[CHAR_ORDER + n - 1] = match_stats(&counts(hw.windows(n)), &counts(rw.windows(n)));
    }
    stats
}

pub fn corpus_stats(hyps: &[String], refs: &[String]) -> ChrfStats {
    let per_segment = par::map_range(hyps.len(), |i| segment_stats(&hyps[i], &refs[i]));
    let mut total = ChrfStats::zero();
    for s in &per_segment {
        total.add(s);
    }
    total
}

/// Corpus chrF++ x 100.
pub fn chrf_pp(hyps: &[String], refs: &[String]) -> Result<f64, MetricError> {
    check_corpus(hyps, refs)?;
    Ok(corpus_stats(hyps, refs).score())
}
