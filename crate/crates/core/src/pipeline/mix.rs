//! Concatenation of corpora into one training mix with a count manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::corpus::{for_each_line, parse_record, AtomicWriter};
use super::state::file_digest;
use super::PipelineError;
use crate::evalset::SplitMix;

/// Field added to every mixed line naming the source it came from.
pub const SOURCE_FIELD: &str = "mix_source";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixSource {
    pub label: String,
    pub path: PathBuf,
    /// When set, the observed line count must equal this.
    pub expected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    pub path: String,
    pub count: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub sources: Vec<ManifestEntry>,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Writes every source, in listed order, to `out`. With `shuffle_seed` the
/// combined lines are permuted deterministically before writing.
pub fn mix_corpora(sources: &[MixSource], out: &Path, shuffle_seed: Option<u64>) -> Result<Manifest, PipelineError> {
    let mut writer = AtomicWriter::create(out)?;
    let mut buffered: Vec<String> = Vec::new();
    let mut entries = Vec::with_capacity(sources.len());
    for src in sources {
        let name = src.label.clone();
        let mut count = 0;
        for_each_line(&src.path, |n, text| {
            let mut rec = parse_record(text).map_err(|reason| PipelineError::MalformedLine {
                source_name: name.clone(),
                line: n,
                reason,
            })?;
            rec.insert(SOURCE_FIELD.into(), Value::String(src.label.clone()));
            let line = serde_json::to_string(&rec).expect("record serializes");
            count += 1;
            if shuffle_seed.is_some() {
                buffered.push(line);
                Ok(())
            } else {
                writer.write_line(&line)
            }
        })?;
        if let Some(expected) = src.expected {
            if expected != count {
                return Err(PipelineError::CountMismatch {
                    source_name: name,
                    expected,
                    observed: count,
                });
            }
        }
        log::info!("{}: {count} records", src.label);
        entries.push(ManifestEntry {
            label: src.label.clone(),
            path: src.path.display().to_string(),
            count,
            sha256: file_digest(&src.path)?,
        });
    }
    if let Some(seed) = shuffle_seed {
        SplitMix::new(seed).shuffle(&mut buffered);
        for line in &buffered {
            writer.write_line(line)?;
        }
    }
    writer.commit()?;
    Ok(Manifest {
        total: entries.iter().map(|e| e.count).sum(),
        sources: entries,
        shuffle_seed,
    })
}
