//! Reading and writing tensor checkpoints in the safetensors layout:
//!
//! ```text
//! [u64 LE header length N][N bytes UTF-8 JSON header][data buffer]
//! ```
//!
//! The header maps each tensor name to `{dtype, shape, data_offsets}` and may
//! carry a `__metadata__` string map. Writes are deterministic: tensors are
//! laid out in sorted name order, packed with no gaps, and the header is
//! padded with spaces to an 8-byte boundary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::quant::e4m3;

/// Largest header length accepted on read.
pub const MAX_HEADER_LEN: u64 = 100 * 1024 * 1024;

const METADATA_KEY: &str = "__metadata__";

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("header length {declared} exceeds {limit} bytes available")]
    HeaderTooLarge { declared: u64, limit: u64 },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("data offset violation: {0}")]
    OffsetViolation(String),
    #[error("unsupported dtype {0:?}")]
    UnsupportedDType(String),
    #[error("tensor names must be non-empty")]
    EmptyName,
    #[error("tensor payload is {actual} bytes, expected {expected} for {dtype} {shape:?}")]
    LengthMismatch {
        dtype: DType,
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TensorIoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        TensorIoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DType {
    F32,
    F16,
    BF16,
    F8E4M3,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::F32, DType::F16, DType::BF16, DType::F8E4M3];

    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 | DType::BF16 => 2,
            DType::F8E4M3 => 1,
        }
    }

    /// Header spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "F32",
            DType::F16 => "F16",
            DType::BF16 => "BF16",
            DType::F8E4M3 => "F8_E4M3",
        }
    }

    pub fn parse(s: &str) -> Result<Self, TensorIoError> {
        match s {
            "F32" => Ok(DType::F32),
            "F16" => Ok(DType::F16),
            "BF16" => Ok(DType::BF16),
            "F8_E4M3" => Ok(DType::F8E4M3),
            other => Err(TensorIoError::UnsupportedDType(other.to_string())),
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of elements for a shape; the empty shape is a scalar.
pub fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// A typed, shaped, little-endian row-major buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    dtype: DType,
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl Tensor {
    pub fn new(dtype: DType, shape: Vec<usize>, data: Vec<u8>) -> Result<Self, TensorIoError> {
        let expected = element_count(&shape) * dtype.width();
        if data.len() != expected {
            return Err(TensorIoError::LengthMismatch {
                dtype,
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor { dtype, shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Result<Self, TensorIoError> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Tensor::new(DType::F32, shape, data)
    }

    /// Encodes real values at `dtype` precision (round to nearest even).
    /// F8 values are encoded unscaled.
    pub fn from_f64(dtype: DType, shape: Vec<usize>, values: &[f64]) -> Result<Self, TensorIoError> {
        let data = match dtype {
            DType::F32 => values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
            DType::F16 => values
                .iter()
                .flat_map(|&v| half::f16::from_f64(v).to_le_bytes())
                .collect(),
            DType::BF16 => values
                .iter()
                .flat_map(|&v| half::bf16::from_f64(v).to_le_bytes())
                .collect(),
            DType::F8E4M3 => values.iter().map(|&v| e4m3::encode(v)).collect(),
        };
        Tensor::new(dtype, shape, data)
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        element_count(&self.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element-wise numeric decode. F8 codes decode to their raw grid value.
    pub fn to_f64(&self) -> Vec<f64> {
        tensor_as_f64(self)
    }
}

/// Decodes every element of `t` to `f64`. NaN payloads stay NaN.
pub fn tensor_as_f64(t: &Tensor) -> Vec<f64> {
    let d = &t.data;
    match t.dtype {
        DType::F32 => d
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DType::F16 => d
            .chunks_exact(2)
            .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f64())
            .collect(),
        DType::BF16 => d
            .chunks_exact(2)
            .map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f64())
            .collect(),
        DType::F8E4M3 => d.iter().map(|&b| e4m3::decode(b)).collect(),
    }
}

/// Named tensors plus free-form string metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Serializes to the on-disk byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>, TensorIoError> {
        let mut header = Map::new();
        if !self.metadata.is_empty() {
            let meta: Map<String, Value> = self
                .metadata
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect();
            header.insert(METADATA_KEY.to_string(), Value::Object(meta));
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            if name.is_empty() {
                return Err(TensorIoError::EmptyName);
            }
            let end = offset + t.data.len();
            let mut entry = Map::new();
            entry.insert("dtype".into(), Value::String(t.dtype.as_str().into()));
            entry.insert("shape".into(), Value::from(t.shape.clone()));
            entry.insert("data_offsets".into(), Value::from(vec![offset, end]));
            header.insert(name.clone(), Value::Object(entry));
            offset = end;
        }
        let mut header_bytes =
            serde_json::to_vec(&Value::Object(header)).map_err(|e| TensorIoError::MalformedHeader(e.to_string()))?;
        while header_bytes.len() % 8 != 0 {
            header_bytes.push(b' ');
        }

        let mut out = Vec::with_capacity(8 + header_bytes.len() + offset);
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for t in self.tensors.values() {
            out.extend_from_slice(&t.data);
        }
        Ok(out)
    }

    /// Parses the on-disk byte layout. Either the whole checkpoint is
    /// valid or an error is returned.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorIoError> {
        if bytes.len() < 8 {
            return Err(TensorIoError::MalformedHeader(format!(
                "file is {} bytes, shorter than the 8-byte length prefix",
                bytes.len()
            )));
        }
        let declared = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        let available = (bytes.len() - 8) as u64;
        if declared > available || declared > MAX_HEADER_LEN {
            return Err(TensorIoError::HeaderTooLarge {
                declared,
                limit: available.min(MAX_HEADER_LEN),
            });
        }
        let header_end = 8 + declared as usize;
        let text = std::str::from_utf8(&bytes[8..header_end])
            .map_err(|e| TensorIoError::MalformedHeader(format!("header is not UTF-8: {e}")))?;
        let header: Map<String, Value> = match serde_json::from_str(text) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(TensorIoError::MalformedHeader("header is not a JSON object".into())),
            Err(e) => return Err(TensorIoError::MalformedHeader(e.to_string())),
        };
        let buffer = &bytes[header_end..];

        let mut metadata = BTreeMap::new();
        let mut entries = Vec::with_capacity(header.len());
        for (name, value) in header {
            if name == METADATA_KEY {
                let Value::Object(m) = value else {
                    return Err(TensorIoError::MalformedHeader("__metadata__ must be an object".into()));
                };
                for (k, v) in m {
                    let Value::String(s) = v else {
                        return Err(TensorIoError::MalformedHeader(format!(
                            "__metadata__ value for {k:?} is not a string"
                        )));
                    };
                    metadata.insert(k, s);
                }
                continue;
            }
            if name.is_empty() {
                return Err(TensorIoError::MalformedHeader("empty tensor name".into()));
            }
            entries.push(parse_entry(name, &value)?);
        }

        entries.sort_by_key(|e| (e.begin, e.end));
        let mut cursor = 0usize;
        for e in &entries {
            if e.end < e.begin {
                return Err(TensorIoError::OffsetViolation(format!(
                    "{}: end {} precedes begin {}",
                    e.name, e.end, e.begin
                )));
            }
            if e.begin < cursor {
                return Err(TensorIoError::OffsetViolation(format!(
                    "{}: region [{}, {}) overlaps data ending at {cursor}",
                    e.name, e.begin, e.end
                )));
            }
            if e.begin > cursor {
                return Err(TensorIoError::OffsetViolation(format!(
                    "{}: gap between {cursor} and {}",
                    e.name, e.begin
                )));
            }
            let expected = element_count(&e.shape) * e.dtype.width();
            if e.end - e.begin != expected {
                return Err(TensorIoError::OffsetViolation(format!(
                    "{}: region holds {} bytes but {} {:?} needs {expected}",
                    e.name,
                    e.end - e.begin,
                    e.dtype,
                    e.shape
                )));
            }
            if e.end > buffer.len() {
                return Err(TensorIoError::OffsetViolation(format!(
                    "{}: end {} past data buffer of {} bytes",
                    e.name,
                    e.end,
                    buffer.len()
                )));
            }
            cursor = e.end;
        }
        if cursor != buffer.len() {
            return Err(TensorIoError::OffsetViolation(format!(
                "{} trailing bytes not covered by any tensor",
                buffer.len() - cursor
            )));
        }

        let mut tensors = BTreeMap::new();
        for e in entries {
            let data = buffer[e.begin..e.end].to_vec();
            let t = Tensor {
                dtype: e.dtype,
                shape: e.shape,
                data,
            };
            if tensors.insert(e.name.clone(), t).is_some() {
                return Err(TensorIoError::MalformedHeader(format!("duplicate tensor {:?}", e.name)));
            }
        }
        Ok(Checkpoint { tensors, metadata })
    }
}

struct Entry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    begin: usize,
    end: usize,
}

fn parse_entry(name: String, value: &Value) -> Result<Entry, TensorIoError> {
    let missing = |key: &str| TensorIoError::MalformedHeader(format!("{name}: missing or invalid {key}"));
    let obj = value.as_object().ok_or_else(|| missing("entry object"))?;
    let dtype = DType::parse(
        obj.get("dtype")
            .and_then(Value::as_str)
            .ok_or_else(|| missing("dtype"))?,
    )?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| missing("shape"))?
        .iter()
        .map(|v| v.as_u64().map(|x| x as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| missing("shape"))?;
    let offsets = obj
        .get("data_offsets")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .ok_or_else(|| missing("data_offsets"))?;
    let begin = offsets[0].as_u64().ok_or_else(|| missing("data_offsets"))? as usize;
    let end = offsets[1].as_u64().ok_or_else(|| missing("data_offsets"))? as usize;
    Ok(Entry {
        name,
        dtype,
        shape,
        begin,
        end,
    })
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, TensorIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TensorIoError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
    let path = path.as_ref();
    let bytes = ckpt.to_bytes()?;
    let mut f = fs::File::create(path).map_err(|e| TensorIoError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| TensorIoError::io(path, e))?;
    f.sync_all().map_err(|e| TensorIoError::io(path, e))
}
