//! Bounded-concurrency batch completion with durable, resumable progress.
//!
//! Workers pull indices from a shared cursor and send results back over a
//! channel. Only the coordinating thread touches the [`JobStore`], so every
//! output is on disk before it counts as done. Outputs come back in index
//! order no matter when they finished.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use thiserror::Error;

use super::client::{Completer, InferenceError};
use crate::pipeline::state::{Fingerprint, JobStore, StateError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem {
    pub index: usize,
    pub prompt: String,
}

impl BatchItem {
    /// Numbers prompts 0, 1, 2, ...
    pub fn from_prompts<I, S>(prompts: I) -> Vec<BatchItem>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        prompts
            .into_iter()
            .enumerate()
            .map(|(index, p)| BatchItem {
                index,
                prompt: p.into(),
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("item {index} failed: {source}")]
    Item {
        index: usize,
        #[source]
        source: InferenceError,
    },
    #[error(transparent)]
    State(#[from] StateError),
    #[error("batch items invalid: {0}")]
    InvalidItems(String),
    #[error("run interrupted with {completed} of {total} items done")]
    Interrupted { completed: usize, total: usize },
}

impl BatchError {
    pub fn is_state_mismatch(&self) -> bool {
        matches!(self, BatchError::State(StateError::StateMismatch { .. }))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchOptions<'a> {
    pub concurrency: usize,
    /// Checked between items; once set, no new requests start.
    pub cancel: Option<&'a AtomicBool>,
}

impl BatchOptions<'_> {
    pub fn with_concurrency(concurrency: usize) -> Self {
        BatchOptions {
            concurrency,
            cancel: None,
        }
    }
}

/// Fingerprint of a prompt batch under a given completer.
pub fn batch_fingerprint<C: Completer + ?Sized>(items: &[BatchItem], client: &C) -> String {
    let mut fp = Fingerprint::new("batch/v1");
    fp.push_str(&client.descriptor());
    fp.push(&(items.len() as u64).to_le_bytes());
    for it in items {
        fp.push_str(&it.prompt);
    }
    fp.finish()
}

/// Completes every item, skipping ones already recorded in `store`.
pub fn run_batch<C: Completer + ?Sized>(
    items: &[BatchItem],
    client: &C,
    concurrency: usize,
    store: &mut JobStore,
) -> Result<Vec<String>, BatchError> {
    run_batch_with(items, client, BatchOptions::with_concurrency(concurrency), store)
}

pub fn run_batch_with<C: Completer + ?Sized>(
    items: &[BatchItem],
    client: &C,
    opts: BatchOptions<'_>,
    store: &mut JobStore,
) -> Result<Vec<String>, BatchError> {
    if let Some(pos) = items.iter().enumerate().position(|(i, it)| it.index != i) {
        return Err(BatchError::InvalidItems(format!(
            "index at position {pos} is {}, expected {pos}",
            items[pos].index
        )));
    }
    let fp = batch_fingerprint(items, client);
    run_indexed(items.len(), &fp, |i| items[i].prompt.clone(), client, opts, store)
}

/// Core loop. Prompts are built on demand so huge runs need not hold them.
pub(crate) fn run_indexed<C, P>(
    n: usize,
    fingerprint: &str,
    prompt: P,
    client: &C,
    opts: BatchOptions<'_>,
    store: &mut JobStore,
) -> Result<Vec<String>, BatchError>
where
    C: Completer + ?Sized,
    P: Fn(usize) -> String + Sync,
{
    if opts.concurrency == 0 {
        return Err(BatchError::InvalidItems("concurrency must be at least 1".into()));
    }
    store.bind(fingerprint)?;

    let mut outputs: Vec<Option<String>> = vec![None; n];
    for (i, out) in store.take_recovered() {
        let slot = outputs
            .get_mut(i)
            .ok_or_else(|| BatchError::InvalidItems(format!("recovered index {i} outside a run of {n}")))?;
        *slot = Some(out);
    }
    let pending: Vec<usize> = (0..n).filter(|&i| outputs[i].is_none()).collect();
    if !pending.is_empty() {
        log::info!("{} of {n} items pending", pending.len());
    }

    let cursor = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = opts.concurrency.min(pending.len());
    let mut first_err: Option<BatchError> = None;

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Result<String, InferenceError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (cursor, abort, pending, prompt) = (&cursor, &abort, &pending, &prompt);
            scope.spawn(move || loop {
                if abort.load(Ordering::Acquire) || opts.cancel.is_some_and(|c| c.load(Ordering::Acquire)) {
                    break;
                }
                let k = cursor.fetch_add(1, Ordering::AcqRel);
                let Some(&i) = pending.get(k) else { break };
                let res = client.complete(&prompt(i));
                if tx.send((i, res)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for (i, res) in rx {
            match res {
                Ok(text) => {
                    // Results that land after a failure are still real work; keep them.
                    if let Err(e) = store.record(i, &text) {
                        abort.store(true, Ordering::Release);
                        first_err.get_or_insert(e.into());
                    }
                    outputs[i] = Some(text);
                }
                Err(source) => {
                    abort.store(true, Ordering::Release);
                    if first_err.is_none() {
                        log::warn!("item {i} failed, stopping: {source}");
                        first_err = Some(BatchError::Item { index: i, source });
                    }
                }
            }
        }
    });

    store.checkpoint()?;
    if let Some(e) = first_err {
        return Err(e);
    }
    let done = outputs.iter().filter(|o| o.is_some()).count();
    if done < n {
        return Err(BatchError::Interrupted {
            completed: done,
            total: n,
        });
    }
    Ok(outputs.into_iter().map(|o| o.expect("all slots filled")).collect())
}
