//! Building blocks for a translate-and-tune pipeline: safetensors I/O, FP8
//! quantization, slerp merging, MT metrics, a batched chat-completion client,
//! corpus construction and evaluation sampling.

pub mod evalset;
pub mod inference;
pub mod merge;
pub mod mtmetrics;
pub mod par;
pub mod pipeline;
pub mod quant;
pub mod tensorio;

pub use par::{parallelism_enabled, set_parallelism};
