//! JSON-lines corpus files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use super::PipelineError;

/// One corpus line: a flat object of string fields, key order preserved.
pub type Record = Map<String, Value>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses one line, requiring an object whose values are all strings.
pub fn parse_record(line: &str) -> Result<Record, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let Value::Object(map) = v else {
        return Err("line is not a JSON object".into());
    };
    if let Some((k, _)) = map.iter().find(|(_, v)| !v.is_string()) {
        return Err(format!("field `{k}` is not a string"));
    }
    Ok(map)
}

/// Calls `f` with (1-based line number, line) for every line of `path`.
pub fn for_each_line(
    path: &Path,
    mut f: impl FnMut(usize, &str) -> Result<(), PipelineError>,
) -> Result<(), PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(io_err(path))? == 0 {
            return Ok(());
        }
        n += 1;
        let text = line.strip_suffix('\n').unwrap_or(&line);
        let text = text.strip_suffix('\r').unwrap_or(text);
        f(n, text)?;
    }
}

/// Reads typed records; every line must be a flat string object.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let name = path.display().to_string();
    let mut out = Vec::new();
    for_each_line(path, |n, text| {
        let malformed = |reason: String| PipelineError::MalformedLine {
            source_name: name.clone(),
            line: n,
            reason,
        };
        let rec = parse_record(text).map_err(malformed)?;
        out.push(serde_json::from_value(Value::Object(rec)).map_err(|e| malformed(e.to_string()))?);
        Ok(())
    })?;
    Ok(out)
}

/// Writes records to `path` via a sibling temp file and a rename.
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<usize, PipelineError> {
    let mut w = AtomicWriter::create(path)?;
    let mut n = 0;
    for it in items {
        w.write_line(&serde_json::to_string(&it).expect("record serializes"))?;
        n += 1;
    }
    w.commit()?;
    Ok(n)
}

/// A buffered file that only appears at its final path on [`commit`](Self::commit).
pub struct AtomicWriter {
    path: PathBuf,
    tmp: PathBuf,
    out: Option<BufWriter<File>>,
}

impl AtomicWriter {
    pub fn create(path: &Path) -> Result<Self, PipelineError> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        Ok(AtomicWriter {
            path: path.to_path_buf(),
            tmp,
            out: Some(BufWriter::new(file)),
        })
    }

    pub fn write_line(&mut self, line: &str) -> Result<(), PipelineError> {
        let out = self.out.as_mut().expect("writer open");
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(io_err(&self.tmp))
    }

    pub fn commit(mut self) -> Result<(), PipelineError> {
        let out = self.out.take().expect("writer open");
        let file = out.into_inner().map_err(|e| PipelineError::Io {
            path: self.tmp.clone(),
            source: e.into_error(),
        })?;
        file.sync_all().map_err(io_err(&self.tmp))?;
        fs::rename(&self.tmp, &self.path).map_err(io_err(&self.path))
    }
}

impl Drop for AtomicWriter {
    fn drop(&mut self) {
        if self.out.take().is_some() {
            let _ = fs::remove_file(&self.tmp);
        }
    }
}
