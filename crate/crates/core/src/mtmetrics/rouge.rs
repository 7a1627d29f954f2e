use std::sync::LazyLock;

use regex::Regex;

use crate::par;

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{L}\p{M}\p{N}]+").unwrap());

/// Lowercased runs of letters, marks and digits in any script.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    WORD.find_iter(text).map(|m| m.as_str().to_lowercase()).collect()
}

/// Length of the longest common subsequence, two-row DP.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 x 100 for one pair.
pub fn rouge_l_f1(hyp: &str, reference: &str) -> f64 {
    let h = rouge_tokens(hyp);
    let r = rouge_tokens(reference);
    let l = lcs_len(&h, &r);
    if h.is_empty() || r.is_empty() || l == 0 {
        return 0.0;
    }
    let p = l as f64 / h.len() as f64;
    let rec = l as f64 / r.len() as f64;
    100.0 * 2.0 * p * rec / (p + rec)
}

/// Mean per-pair ROUGE-L F1.
pub fn rouge_l_corpus(hyps: &[String], refs: &[String]) -> f64 {
    if hyps.is_empty() {
        return 0.0;
    }
    let scores = par::map_range(hyps.len(), |i| rouge_l_f1(&hyps[i], &refs[i]));
    scores.iter().sum::<f64>() / scores.len() as f64
}
