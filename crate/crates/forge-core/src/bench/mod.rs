//! Benchmark harness: prompt catalog, chat-completions client with caching,
//! verdict parsers, the eval runner, and fine-tune export.

pub mod client;
pub mod finetune;
pub mod prompt;
pub mod runner;
pub mod verdict;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("empty sample text")]
    EmptySample,
    #[error("ICL block needs exactly 10 examples for {ptype}, got {got}")]
    BadIclBlock { ptype: String, got: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("auth env var {0} is not set")]
    MissingAuth(String),
    #[error("endpoint {endpoint}: {msg}")]
    Http { endpoint: String, msg: String },
    #[error("mock script has no reply for {0:?} and no \"*\" default")]
    MockMissing(String),
    #[error("aborting: {failed} of {total} calls failed (limit {limit:.0}%)")]
    TooManyFailures { failed: usize, total: usize, limit: f64 },
    #[error("need at least {need} samples, have {have}")]
    InsufficientSamples { need: usize, have: usize },
    #[error("export size must be positive")]
    ZeroExport,
}
