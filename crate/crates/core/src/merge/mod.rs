//! Spherical linear interpolation of two checkpoints, tensor by tensor.
//!
//! Each tensor is flattened and treated as one vector. All arithmetic runs in
//! f64; results are re-encoded at the wider of the two source dtypes.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::par;
use crate::quant::{dequantize_fp8, QuantizedTensor, SCALE_SUFFIX};
use crate::tensorio::{Checkpoint, DType, Tensor, TensorIoError};

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot interpolate empty vectors")]
    EmptyVector,
    #[error("t = {0} is outside [0, 1]")]
    TOutOfRange(f64),
    #[error("parallel_eps must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("tensor {name:?}: shapes {a:?} and {b:?} differ")]
    ShapeMismatch { name: String, a: Vec<usize>, b: Vec<usize> },
    #[error("tensor {0:?} is present in only one checkpoint")]
    MissingTensor(String),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NamePolicy {
    #[default]
    Error,
    CopyFromPresent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeSpec {
    pub t: f64,
    pub parallel_eps: f64,
    pub name_policy: NamePolicy,
}

impl Default for MergeSpec {
    fn default() -> Self {
        MergeSpec {
            t: 0.5,
            parallel_eps: 1e-8,
            name_policy: NamePolicy::Error,
        }
    }
}

impl MergeSpec {
    pub fn validate(&self) -> Result<(), MergeError> {
        if !(0.0..=1.0).contains(&self.t) {
            return Err(MergeError::TOutOfRange(self.t));
        }
        if self.parallel_eps.is_nan() || self.parallel_eps <= 0.0 {
            return Err(MergeError::BadEpsilon(self.parallel_eps));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Slerp from `a` (t = 0) to `b` (t = 1). Falls back to linear interpolation
/// when either vector is zero or `sin(omega) < eps`.
pub fn slerp_vec(a: &[f64], b: &[f64], t: f64, eps: f64) -> Result<Vec<f64>, MergeError> {
    if a.len() != b.len() {
        return Err(MergeError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MergeError::EmptyVector);
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(MergeError::TOutOfRange(t));
    }
    Ok(slerp_unchecked(a, b, t, eps))
}

fn slerp_unchecked(a: &[f64], b: &[f64], t: f64, eps: f64) -> Vec<f64> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    let lerp = || a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
    if na == 0.0 || nb == 0.0 {
        return lerp();
    }
    let cos = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    let omega = cos.acos();
    let sin = omega.sin();
    if sin.is_nan() || sin < eps {
        return lerp();
    }
    let ca = ((1.0 - t) * omega).sin() / sin;
    let cb = (t * omega).sin() / sin;
    a.iter().zip(b).map(|(x, y)| ca * x + cb * y).collect()
}

/// F8 codes decode through their scale sidecar and count as F32.
fn effective_dtype(d: DType) -> DType {
    match d {
        DType::F8E4M3 => DType::F32,
        other => other,
    }
}

fn wider(a: DType, b: DType) -> DType {
    let (a, b) = (effective_dtype(a), effective_dtype(b));
    if a == b {
        a
    } else {
        // F16 and BF16 trade range for precision; F32 holds both exactly.
        DType::F32
    }
}

fn decode(c: &Checkpoint, name: &str) -> Result<Vec<f64>, MergeError> {
    let t = &c.tensors[name];
    if t.dtype() != DType::F8E4M3 {
        return Ok(t.to_f64());
    }
    let scale = c
        .get(&format!("{name}{SCALE_SUFFIX}"))
        .and_then(|s| s.to_f64().first().copied())
        .unwrap_or(1.0) as f32;
    let q = QuantizedTensor::new(t.clone(), scale).map_err(|e| match e {
        crate::quant::QuantError::Tensor(t) => MergeError::Tensor(t),
        other => MergeError::Tensor(TensorIoError::MalformedHeader(other.to_string())),
    })?;
    Ok(dequantize_fp8(&q).to_f64())
}

/// Names that are F8 scale sidecars in `c`.
fn sidecars(c: &Checkpoint) -> BTreeSet<String> {
    c.tensors
        .iter()
        .filter(|(_, t)| t.dtype() == DType::F8E4M3)
        .map(|(n, _)| format!("{n}{SCALE_SUFFIX}"))
        .filter(|s| c.tensors.contains_key(s))
        .collect()
}

/// Merges `x` (t = 0) with `y` (t = 1).
pub fn merge_checkpoints(x: &Checkpoint, y: &Checkpoint, spec: &MergeSpec) -> Result<Checkpoint, MergeError> {
    spec.validate()?;
    let skip_x = sidecars(x);
    let skip_y = sidecars(y);
    let names_x: BTreeSet<&String> = x.tensors.keys().filter(|n| !skip_x.contains(*n)).collect();
    let names_y: BTreeSet<&String> = y.tensors.keys().filter(|n| !skip_y.contains(*n)).collect();

    let mut out = Checkpoint::new();
    for only in names_x.symmetric_difference(&names_y) {
        match spec.name_policy {
            NamePolicy::Error => return Err(MergeError::MissingTensor((*only).clone())),
            NamePolicy::CopyFromPresent => {
                let src = if names_x.contains(*only) { x } else { y };
                let values = decode(src, only)?;
                let t = &src.tensors[*only];
                let dtype = effective_dtype(t.dtype());
                out.insert((*only).clone(), Tensor::from_f64(dtype, t.shape().to_vec(), &values)?);
            }
        }
    }

    let common: Vec<&String> = names_x.intersection(&names_y).copied().collect();
    for name in &common {
        let (a, b) = (&x.tensors[*name], &y.tensors[*name]);
        if a.shape() != b.shape() {
            return Err(MergeError::ShapeMismatch {
                name: (*name).clone(),
                a: a.shape().to_vec(),
                b: b.shape().to_vec(),
            });
        }
    }

    let merged = par::try_map(&common, |name| -> Result<Tensor, MergeError> {
        let (ta, tb) = (&x.tensors[*name], &y.tensors[*name]);
        let va = decode(x, name)?;
        let vb = decode(y, name)?;
        let values = if va.is_empty() {
            Vec::new()
        } else {
            slerp_unchecked(&va, &vb, spec.t, spec.parallel_eps)
        };
        Ok(Tensor::from_f64(
            wider(ta.dtype(), tb.dtype()),
            ta.shape().to_vec(),
            &values,
        )?)
    })?;
    for (name, t) in common.into_iter().zip(merged) {
        out.insert(name.clone(), t);
    }
    out.metadata.insert("merge_method".into(), "slerp".into());
    out.metadata.insert("merge_t".into(), spec.t.to_string());
    Ok(out)
}
