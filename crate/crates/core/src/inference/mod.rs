//! OpenAI-compatible chat-completion client and the batch runner built on it.

pub mod batch;
pub mod client;

pub use batch::{run_batch, run_batch_with, BatchError, BatchItem, BatchOptions};
pub use client::{
    chat_complete, AttemptError, ChatClient, Completer, EndpointConfig, HttpTransport, InferenceError, Transport,
};
