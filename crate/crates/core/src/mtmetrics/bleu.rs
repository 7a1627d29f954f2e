use std::collections::HashMap;

use super::{check_corpus, tokenize::tokenize_13a, MetricError};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    None,
    #[default]
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BleuOptions {
    pub max_order: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuOptions {
    fn default() -> Self {
        BleuOptions {
            max_order: 4,
            smoothing: Smoothing::Exp,
        }
    }
}

/// Sufficient statistics for corpus BLEU. Integer counts, so summing
/// segments in any order gives the same result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    pub hyp_len: u64,
    pub ref_len: u64,
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
}

impl BleuStats {
    pub fn zero(max_order: usize) -> Self {
        BleuStats {
            hyp_len: 0,
            ref_len: 0,
            matches: vec![0; max_order],
            totals: vec![0; max_order],
        }
    }

    pub fn add(&mut self, other: &BleuStats) {
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
    }

    /// BLEU x 100. Orders the hypothesis corpus is too short to contain are
    /// left out of the geometric mean, so a perfect match scores 100 even
    /// when every segment is shorter than `max_order`.
    pub fn score(&self, smoothing: Smoothing) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0usize;
        let mut zero_orders = 0i32;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                break;
            }
            orders += 1;
            let p = if m > 0 {
                m as f64 / t as f64
            } else {
                match smoothing {
                    Smoothing::None => return 0.0,
                    Smoothing::Exp => {
                        zero_orders += 1;
                        1.0 / (2f64.powi(zero_orders) * t as f64)
                    }
                }
            };
            log_sum += p.ln();
        }
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        100.0 * bp * (log_sum / orders as f64).exp()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn segment_stats(hyp: &str, reference: &str, max_order: usize) -> BleuStats {
    let h = tokenize_13a(hyp);
    let r = tokenize_13a(reference);
    let mut stats = BleuStats::zero(max_order);
    stats.hyp_len = h.len() as u64;
    stats.ref_len = r.len() as u64;
    for n in 1..=max_order {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        stats.totals[n - 1] = h.len().saturating_sub(n - 1) as u64;
        stats.matches[n - 1] = hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum();
    }
    stats
}

pub fn corpus_stats(hyps: &[String], refs: &[String], max_order: usize) -> BleuStats {
    let per_segment = par::map_range(hyps.len(), |i| segment_stats(&hyps[i], &refs[i], max_order));
    let mut total = BleuStats::zero(max_order);
    for s in &per_segment {
        total.add(s);
    }
    total
}

/// Corpus BLEU over single-reference segments, 13a-tokenized, x 100.
pub fn bleu_corpus(hyps: &[String], refs: &[String], opts: BleuOptions) -> Result<f64, MetricError> {
    check_corpus(hyps, refs)?;
    if !(1..=9).contains(&opts.max_order) {
        return Err(MetricError::BadOrder(opts.max_order));
    }
    Ok(corpus_stats(hyps, refs, opts.max_order).score(opts.smoothing))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn perfect_match_is_exactly_100() {
        let c = s(&["the cat sat on the mat .", "a b", "x"]);
        assert_eq!(bleu_corpus(&c, &c, BleuOptions::default()).unwrap(), 100.0);
    }

    #[test]
    fn brevity_only() {
        let b = bleu_corpus(&s(&["a b c d"]), &s(&["a b c d e"]), BleuOptions::default()).unwrap();
        assert!((b - 100.0 * (1.0f64 - 5.0 / 4.0).exp()).abs() < 1e-9);
        assert!((b - 77.88).abs() < 0.01);
    }

    #[test]
    fn clipped_unigrams_and_smoothing() {
        // p1 = 1/3 clipped; p2 = 1/(2*2) and p3 = 1/(4*1) smoothed; the
        // hypothesis has no 4-grams so only three orders enter the mean.
        let st = corpus_stats(&s(&["the the the"]), &s(&["the cat"]), 4);
        assert_eq!(st.matches, vec![1, 0, 0, 0]);
        assert_eq!(st.totals, vec![3, 2, 1, 0]);
        let manual = 100.0 * (((1.0f64 / 3.0).ln() + (0.25f64).ln() + (0.25f64).ln()) / 3.0).exp();
        let got = st.score(Smoothing::Exp);
        assert!((got - manual).abs() < 1e-12, "{got} vs {manual}");
        assert_eq!(st.score(Smoothing::None), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            bleu_corpus(&[], &[], BleuOptions::default()),
            Err(MetricError::EmptyCorpus)
        ));
        assert!(matches!(
            bleu_corpus(&s(&["a"]), &s(&["a", "b"]), BleuOptions::default()),
            Err(MetricError::LengthMismatch(1, 2))
        ));
        let o = BleuOptions {
            max_order: 10,
            ..Default::default()
        };
        assert!(matches!(
            bleu_corpus(&s(&["a"]), &s(&["a"]), o),
            Err(MetricError::BadOrder(10))
        ));
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        assert_eq!(
            bleu_corpus(&s(&[""]), &s(&["a b"]), BleuOptions::default()).unwrap(),
            0.0
        );
    }
}
