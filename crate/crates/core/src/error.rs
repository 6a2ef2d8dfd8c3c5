use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("trace {path}: line {line}: {msg}")]
    TraceParse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("trace {path}: {msg}")]
    Trace { path: PathBuf, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    ConfigSerialize(#[from] toml::ser::Error),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("run {discipline}/{stas} STAs/seed {seed} failed: {msg}")]
    Run {
        discipline: String,
        stas: usize,
        seed: u64,
        msg: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
