//! Run configuration: defaults, then an optional flat TOML file, then flags.

use std::path::{Path, PathBuf};

use bitext::inference::EndpointConfig;
use clap::Args;
use serde::Deserialize;

use crate::CliError;

pub const API_KEY_ENV: &str = "BITEXT_API_KEY";

/// Keys accepted in the `--config` file. Everything is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub timeout_secs: Option<f64>,
    pub max_retries: Option<u32>,
    pub backoff_base_secs: Option<f64>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub concurrency: Option<usize>,
    pub verbosity: Option<String>,
    pub output_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Endpoint flags shared by the commands that call a model.
#[derive(Debug, Clone, Default, Args)]
pub struct EndpointArgs {
    /// Server root, e.g. http://127.0.0.1:8000
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long = "model")]
    pub model_name: Option<String>,
    /// Requests in flight at once
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Per-request timeout in seconds
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub endpoint: EndpointConfig,
    pub concurrency: usize,
}

pub const DEFAULT_CONCURRENCY: usize = 8;

impl RunConfig {
    pub fn resolve(file: &FileConfig, flags: &EndpointArgs) -> Result<Self, CliError> {
        let d = EndpointConfig::default();
        let endpoint = EndpointConfig {
            base_url: pick(&flags.base_url, &file.base_url, d.base_url),
            model_name: pick(&flags.model_name, &file.model_name, d.model_name),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout_secs: pick(&flags.timeout, &file.timeout_secs, d.timeout_secs),
            max_retries: pick(&flags.max_retries, &file.max_retries, d.max_retries),
            backoff_base_secs: file.backoff_base_secs.unwrap_or(d.backoff_base_secs),
            temperature: pick(&flags.temperature, &file.temperature, d.temperature),
            max_tokens: pick(&flags.max_tokens, &file.max_tokens, d.max_tokens),
        };
        endpoint.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let concurrency = pick(&flags.concurrency, &file.concurrency, DEFAULT_CONCURRENCY);
        if concurrency == 0 {
            return Err(CliError::Usage("concurrency must be at least 1".into()));
        }
        Ok(RunConfig { endpoint, concurrency })
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}
