//! Durable run state for resumable batch jobs.
//!
//! A job keeps two files: `<state>` holds the run fingerprint and a
//! checkpoint of completed indices, rewritten atomically; `<state>.log` is an
//! append-only JSON-lines record of every completed item. The log is the
//! source of truth on resume. A torn final line is discarded.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("state belongs to a different run (stored {stored}, requested {requested})")]
    StateMismatch { stored: String, requested: String },
    #[error("state file {path} is corrupt: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StateError + '_ {
    move |source| StateError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Sorted, disjoint, half-open index ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexRanges(Vec<[u64; 2]>);

impl IndexRanges {
    pub fn contains(&self, i: u64) -> bool {
        let pos = self.0.partition_point(|r| r[1] <= i);
        self.0.get(pos).is_some_and(|r| r[0] <= i)
    }

    pub fn insert(&mut self, i: u64) {
        let pos = self.0.partition_point(|r| r[1] < i);
        match self.0.get(pos).copied() {
            Some(r) if r[0] <= i && i < r[1] => {}
            Some(r) if r[1] == i => {
                self.0[pos][1] = i + 1;
                if let Some(next) = self.0.get(pos + 1).copied() {
                    if next[0] == i + 1 {
                        self.0[pos][1] = next[1];
                        self.0.remove(pos + 1);
                    }
                }
            }
            Some(r) if r[0] == i + 1 => self.0[pos][0] = i,
            _ => self.0.insert(pos, [i, i + 1]),
        }
    }

    pub fn count(&self) -> u64 {
        self.0.iter().map(|r| r[1] - r[0]).sum()
    }

    pub fn ranges(&self) -> &[[u64; 2]] {
        &self.0
    }
}

/// The checkpointed part of a job.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobState {
    pub fingerprint: String,
    pub completed: IndexRanges,
    /// Byte length of the completion log covered by this checkpoint.
    pub log_position: u64,
    #[serde(default)]
    pub finished: bool,
}

#[derive(Serialize, Deserialize)]
struct LogRecord {
    i: u64,
    out: String,
}

struct Backing {
    state_path: PathBuf,
    log_path: PathBuf,
    log: File,
}

/// Single-writer store for a [`JobState`], on disk or in memory.
pub struct JobStore {
    state: JobState,
    bound: bool,
    backing: Option<Backing>,
    recovered: Vec<(usize, String)>,
    since_checkpoint: usize,
    checkpoint_every: usize,
}

pub fn log_path_for(state_path: &Path) -> PathBuf {
    let mut s = state_path.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

impl JobStore {
    pub fn in_memory() -> Self {
        JobStore {
            state: JobState::default(),
            bound: false,
            backing: None,
            recovered: Vec::new(),
            since_checkpoint: 0,
            checkpoint_every: 64,
        }
    }

    /// Opens (or starts) the job at `state_path`, replaying its log.
    pub fn open(state_path: impl AsRef<Path>) -> Result<Self, StateError> {
        let state_path = state_path.as_ref().to_path_buf();
        let log_path = log_path_for(&state_path);
        let existing = if state_path.exists() {
            let text = fs::read_to_string(&state_path).map_err(io_err(&state_path))?;
            Some(
                serde_json::from_str::<JobState>(&text).map_err(|e| StateError::Corrupt {
                    path: state_path.display().to_string(),
                    reason: e.to_string(),
                })?,
            )
        } else {
            None
        };

        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let mut store = JobStore::in_memory();
        match existing {
            None => {
                // No checkpoint means nothing in the log was ever bound to a run.
                log.set_len(0).map_err(io_err(&log_path))?;
            }
            Some(state) => {
                let (records, good_len) = replay(&mut log, &log_path)?;
                if good_len < state.log_position {
                    return Err(StateError::Corrupt {
                        path: log_path.display().to_string(),
                        reason: format!("log is {good_len} bytes but checkpoint covers {}", state.log_position),
                    });
                }
                log.set_len(good_len).map_err(io_err(&log_path))?;
                let mut completed = IndexRanges::default();
                for (i, _) in &records {
                    completed.insert(*i as u64);
                }
                store.state = JobState {
                    completed,
                    log_position: good_len,
                    ..state
                };
                store.bound = true;
                store.recovered = records;
            }
        }
        store.backing = Some(Backing {
            state_path,
            log_path,
            log,
        });
        Ok(store)
    }

    pub fn with_checkpoint_every(mut self, n: usize) -> Self {
        self.checkpoint_every = n.max(1);
        self
    }

    pub fn state(&self) -> &JobState {
        &self.state
    }

    pub fn fingerprint(&self) -> Option<&str> {
        self.bound.then_some(self.state.fingerprint.as_str())
    }

    /// Ties the store to one run. A fresh store adopts `fingerprint`; a
    /// resumed one must already carry it.
    pub fn bind(&mut self, fingerprint: &str) -> Result<(), StateError> {
        if self.bound {
            if self.state.fingerprint != fingerprint {
                return Err(StateError::StateMismatch {
                    stored: self.state.fingerprint.clone(),
                    requested: fingerprint.to_string(),
                });
            }
            return Ok(());
        }
        self.state.fingerprint = fingerprint.to_string();
        self.bound = true;
        self.checkpoint()
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished
    }

    pub fn mark_finished(&mut self) -> Result<(), StateError> {
        self.state.finished = true;
        self.checkpoint()
    }

    pub fn is_completed(&self, index: usize) -> bool {
        self.state.completed.contains(index as u64)
    }

    pub fn completed_count(&self) -> u64 {
        self.state.completed.count()
    }

    /// Outputs replayed from the log on open. Drained by the first caller.
    pub fn take_recovered(&mut self) -> Vec<(usize, String)> {
        std::mem::take(&mut self.recovered)
    }

    /// Durably appends one completed item.
    pub fn record(&mut self, index: usize, output: &str) -> Result<(), StateError> {
        if let Some(b) = &mut self.backing {
            let mut line = serde_json::to_vec(&LogRecord {
                i: index as u64,
                out: output.to_string(),
            })
            .expect("record serializes");
            line.push(b'\n');
            b.log.write_all(&line).map_err(io_err(&b.log_path))?;
            b.log.flush().map_err(io_err(&b.log_path))?;
            self.state.log_position += line.len() as u64;
        }
        self.state.completed.insert(index as u64);
        self.since_checkpoint += 1;
        if self.since_checkpoint >= self.checkpoint_every {
            self.checkpoint()?;
        }
        Ok(())
    }

    /// Atomically rewrites the state file (write to a sibling, then rename).
    pub fn checkpoint(&mut self) -> Result<(), StateError> {
        self.since_checkpoint = 0;
        let Some(b) = &mut self.backing else {
            return Ok(());
        };
        b.log.sync_data().map_err(io_err(&b.log_path))?;
        let mut tmp = b.state_path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let text = serde_json::to_vec(&self.state).expect("state serializes");
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&text).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &b.state_path).map_err(io_err(&b.state_path))
    }
}

/// Reads every complete, well-formed log line. Returns the records and the
/// byte length they occupy.
fn replay(log: &mut File, path: &Path) -> Result<(Vec<(usize, String)>, u64), StateError> {
    log.seek(SeekFrom::Start(0)).map_err(io_err(path))?;
    let mut reader = BufReader::new(&*log);
    let mut records = Vec::new();
    let mut good = 0u64;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(io_err(path))?;
        if n == 0 || buf.last() != Some(&b'\n') {
            break;
        }
        let Ok(rec) = serde_json::from_slice::<LogRecord>(&buf) else {
            break;
        };
        records.push((rec.i as usize, rec.out));
        good += n as u64;
    }
    Ok((records, good))
}

/// Incremental SHA-256 over length-prefixed parts.
#[derive(Clone, Default)]
pub struct Fingerprint(Sha256);

impl Fingerprint {
    pub fn new(kind: &str) -> Self {
        let mut f = Fingerprint(Sha256::new());
        f.push(kind.as_bytes());
        f
    }

    pub fn push(&mut self, part: &[u8]) -> &mut Self {
        self.0.update((part.len() as u64).to_le_bytes());
        self.0.update(part);
        self
    }

    pub fn push_str(&mut self, part: &str) -> &mut Self {
        self.push(part.as_bytes())
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String, StateError> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(io_err(path))?;
    Ok(hex::encode(h.finalize()))
}
