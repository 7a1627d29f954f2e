//! Binary accept/reject filtering of parallel pairs by a judge model.

use serde::{Deserialize, Serialize};

use super::prompts::render_judge_prompt;
use super::state::{Fingerprint, JobStore};
use super::PipelineError;
use crate::inference::batch::run_indexed;
use crate::inference::{BatchOptions, Completer};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelPair {
    pub ar: String,
    pub en: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
    /// Anything else, kept exactly as the judge wrote it.
    Unparseable(String),
}

const TRAILING_PUNCT: &[char] = &['.', '!', '?', ',', ';', ':', '\u{061F}', '\u{06D4}', '\u{3002}'];

pub fn parse_verdict(raw: &str) -> Verdict {
    let norm = raw.to_lowercase();
    let norm = norm.trim().trim_end_matches(TRAILING_PUNCT).trim_end();
    match norm {
        "accept" => Verdict::Accept,
        "reject" => Verdict::Reject,
        _ => Verdict::Unparseable(raw.to_string()),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub candidates: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub unparseable: u64,
}

impl FilterStats {
    pub fn record(&mut self, v: &Verdict) {
        self.candidates += 1;
        match v {
            Verdict::Accept => self.accepted += 1,
            Verdict::Reject => self.rejected += 1,
            Verdict::Unparseable(_) => self.unparseable += 1,
        }
    }

    pub fn from_verdicts<'a>(vs: impl IntoIterator<Item = &'a Verdict>) -> Self {
        let mut s = FilterStats::default();
        vs.into_iter().for_each(|v| s.record(v));
        s
    }

    /// Accepted share of candidates, 0 when there were none.
    pub fn acceptance_rate(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.accepted as f64 / self.candidates as f64
        }
    }

    /// Pairs not retained, whatever the reason.
    pub fn dropped(&self) -> u64 {
        self.rejected + self.unparseable
    }

    pub fn summary_line(&self) -> String {
        format!(
            "candidates = {} | accepted = {} | rejected = {} | unparseable = {} | rate = {:.4}%",
            self.candidates,
            self.accepted,
            self.rejected,
            self.unparseable,
            100.0 * self.acceptance_rate()
        )
    }
}

pub fn judge_fingerprint<C: Completer + ?Sized>(pairs: &[ParallelPair], judge: &C) -> String {
    let mut fp = Fingerprint::new("judge/v1");
    fp.push_str(&judge.descriptor());
    fp.push(&(pairs.len() as u64).to_le_bytes());
    for p in pairs {
        fp.push_str(&p.ar).push_str(&p.en);
    }
    fp.finish()
}

/// Judges every pair once and keeps the accepted ones in input order.
///
/// Unparseable verdicts are not retained but are counted on their own.
pub fn filter_parallel_corpus<C: Completer + ?Sized>(
    pairs: &[ParallelPair],
    judge: &C,
    opts: BatchOptions<'_>,
    store: &mut JobStore,
) -> Result<(Vec<ParallelPair>, FilterStats), PipelineError> {
    for (index, p) in pairs.iter().enumerate() {
        if p.ar.is_empty() {
            return Err(PipelineError::EmptyField { index, field: "ar" });
        }
        if p.en.is_empty() {
            return Err(PipelineError::EmptyField { index, field: "en" });
        }
    }
    let fp = judge_fingerprint(pairs, judge);
    let raw = run_indexed(
        pairs.len(),
        &fp,
        |i| render_judge_prompt(&pairs[i].ar, &pairs[i].en).expect("validated non-empty"),
        judge,
        opts,
        store,
    )?;
    let mut stats = FilterStats::default();
    let mut kept = Vec::new();
    for (pair, out) in pairs.iter().zip(&raw) {
        let v = parse_verdict(out);
        if v == Verdict::Accept {
            kept.push(pair.clone());
        }
        stats.record(&v);
    }
    Ok((kept, stats))
}
