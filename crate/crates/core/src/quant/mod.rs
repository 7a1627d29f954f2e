//! FP8 (E4M3) quantization with one dynamic scale per tensor.
//!
//! A tensor's scale is `amax / 448`, so its largest element lands on the top
//! of the E4M3 grid. Scales are stored as scalar F32 tensors named
//! `<name>.scale` next to the code tensor.

pub mod e4m3;

use globset::{Glob, GlobSet, GlobSetBuilder};
use thiserror::Error;

use crate::par;
use crate::tensorio::{Checkpoint, DType, Tensor, TensorIoError};

pub const SCALE_SUFFIX: &str = ".scale";

/// Relative round-trip error bound for values in the normal range.
pub const RELATIVE_ERROR_BOUND: f64 = 0.0625;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("non-finite value at element {index}")]
    NonFiniteInput { index: usize },
    #[error("tensor is already F8_E4M3")]
    AlreadyQuantized,
    #[error("invalid scale {0}")]
    InvalidScale(f32),
    #[error("tensor {name:?}: {source}")]
    InTensor {
        name: String,
        #[source]
        source: Box<QuantError>,
    },
    #[error("output name {0:?} already exists in the checkpoint")]
    NameCollision(String),
    #[error("invalid skip pattern {pattern:?}: {reason}")]
    BadPattern { pattern: String, reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

/// `max|v| / 448`, or 1.0 for an all-zero (or empty) input.
pub fn compute_scale(values: &[f64]) -> Result<f64, QuantError> {
    let mut amax = 0.0f64;
    for (index, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(QuantError::NonFiniteInput { index });
        }
        amax = amax.max(v.abs());
    }
    Ok(if amax == 0.0 { 1.0 } else { amax / e4m3::MAX })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    codes: Tensor,
    scale: f32,
}

impl QuantizedTensor {
    pub fn new(codes: Tensor, scale: f32) -> Result<Self, QuantError> {
        if codes.dtype() != DType::F8E4M3 {
            return Err(TensorIoError::UnsupportedDType(codes.dtype().to_string()).into());
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(QuantError::InvalidScale(scale));
        }
        Ok(QuantizedTensor { codes, scale })
    }

    pub fn codes(&self) -> &Tensor {
        &self.codes
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn scale_tensor(&self) -> Tensor {
        Tensor::from_f32(vec![], &[self.scale]).expect("scalar")
    }
}

pub fn quantize_fp8(t: &Tensor) -> Result<QuantizedTensor, QuantError> {
    if t.dtype() == DType::F8E4M3 {
        return Err(QuantError::AlreadyQuantized);
    }
    let values = t.to_f64();
    let scale = compute_scale(&values)? as f32;
    // A subnormal amax can underflow the f32 scale.
    let scale = if scale > 0.0 { scale } else { f32::MIN_POSITIVE };
    let inv = scale as f64;
    let codes: Vec<u8> = values.iter().map(|&x| e4m3::encode(x / inv)).collect();
    let codes = Tensor::new(DType::F8E4M3, t.shape().to_vec(), codes)?;
    QuantizedTensor::new(codes, scale)
}

/// F32 tensor of `decode(code) * scale`.
pub fn dequantize_fp8(q: &QuantizedTensor) -> Tensor {
    let s = q.scale as f64;
    let values: Vec<f32> = q.codes.data().iter().map(|&c| (e4m3::decode(c) * s) as f32).collect();
    Tensor::from_f32(q.codes.shape().to_vec(), &values).expect("shape preserved")
}

/// Tensors whose names match any pattern stay at source precision.
#[derive(Debug, Clone)]
pub struct QuantPolicy {
    patterns: Vec<String>,
    set: GlobSet,
}

impl QuantPolicy {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, QuantError> {
        let mut builder = GlobSetBuilder::new();
        let mut kept = Vec::with_capacity(patterns.len());
        for p in patterns {
            let p = p.as_ref();
            let glob = Glob::new(p).map_err(|e| QuantError::BadPattern {
                pattern: p.to_string(),
                reason: e.kind().to_string(),
            })?;
            builder.add(glob);
            kept.push(p.to_string());
        }
        let set = builder.build().map_err(|e| QuantError::BadPattern {
            pattern: kept.join(","),
            reason: e.to_string(),
        })?;
        Ok(QuantPolicy { patterns: kept, set })
    }

    pub fn skips(&self, name: &str) -> bool {
        self.set.is_match(name)
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }
}

impl Default for QuantPolicy {
    fn default() -> Self {
        QuantPolicy::new::<&str>(&[]).expect("empty policy")
    }
}

/// Replaces every non-skipped tensor with F8 codes plus a `<name>.scale`
/// sidecar. Skipped tensors are copied verbatim.
pub fn quantize_checkpoint(c: &Checkpoint, policy: &QuantPolicy) -> Result<Checkpoint, QuantError> {
    let targets: Vec<(&String, &Tensor)> = c.tensors.iter().filter(|(n, _)| !policy.skips(n)).collect();
    for (name, _) in &targets {
        let scale_name = format!("{name}{SCALE_SUFFIX}");
        if c.tensors.contains_key(&scale_name) {
            return Err(QuantError::NameCollision(scale_name));
        }
    }

    let quantized = par::try_map(&targets, |(name, t)| {
        quantize_fp8(t).map_err(|e| QuantError::InTensor {
            name: (*name).clone(),
            source: Box::new(e),
        })
    })?;

    let mut out = Checkpoint {
        tensors: c.tensors.clone(),
        metadata: c.metadata.clone(),
    };
    for ((name, _), q) in targets.iter().zip(quantized) {
        out.tensors.insert(format!("{name}{SCALE_SUFFIX}"), q.scale_tensor());
        out.tensors.insert((*name).clone(), q.codes);
    }
    out.metadata
        .insert("quantization".into(), "fp8_e4m3fn/per_tensor_dynamic".into());
    out.metadata.insert(
        "quantization_skip".into(),
        serde_json::to_string(policy.patterns()).expect("strings serialize"),
    );
    Ok(out)
}

/// Per-tensor result of checking a quantized checkpoint against its source.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorAudit {
    pub name: String,
    pub amax: f64,
    pub scale: f32,
    /// Largest relative error among elements at or above `scale * 2^-6`.
    pub max_rel_error: f64,
    pub checked: usize,
}

impl TensorAudit {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= RELATIVE_ERROR_BOUND
    }
}

/// Dequantizes every F8 tensor in `quantized` that has a scale sidecar and
/// compares it element-wise with the same tensor in `original`.
pub fn audit_quantized(original: &Checkpoint, quantized: &Checkpoint) -> Result<Vec<TensorAudit>, QuantError> {
    let names: Vec<&String> = quantized
        .tensors
        .iter()
        .filter(|(n, t)| t.dtype() == DType::F8E4M3 && original.tensors.contains_key(*n))
        .map(|(n, _)| n)
        .collect();
    par::try_map(&names, |name| {
        let codes = &quantized.tensors[*name];
        let scale = quantized
            .get(&format!("{name}{SCALE_SUFFIX}"))
            .and_then(|s| s.to_f64().first().copied())
            .unwrap_or(1.0) as f32;
        let q = QuantizedTensor::new(codes.clone(), scale)?;
        let restored = dequantize_fp8(&q).to_f64();
        let source = original.tensors[*name].to_f64();
        let floor = scale as f64 * e4m3::MIN_NORMAL;
        let mut audit = TensorAudit {
            name: (*name).clone(),
            amax: source.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            scale,
            max_rel_error: 0.0,
            checked: 0,
        };
        for (x, y) in source.iter().zip(&restored) {
            if x.abs() >= floor && *x != 0.0 {
                audit.checked += 1;
                audit.max_rel_error = audit.max_rel_error.max((y - x).abs() / x.abs());
            }
        }
        Ok(audit)
    })
}
