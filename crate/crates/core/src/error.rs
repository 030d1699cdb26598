use std::path::PathBuf;

use thiserror::Error;

/// Inputs outside the domain of one of the model formulas.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("frame position {k} outside a GoP of {gop_size} frames")]
    FramePosition { k: usize, gop_size: usize },
    #[error("viewing probability {0} outside (0, 1]")]
    Probability(f64),
    #[error("chunk {chunk} is not ahead of the chunk being watched ({watching})")]
    ChunkNotAhead { chunk: u32, watching: u32 },
    #[error("negative sample {0}")]
    NegativeSample(f64),
    #[error("smoothing weight {0} outside (0, 1]")]
    Alpha(f64),
    #[error("target delay must be positive, got {0}")]
    NonPositiveDelay(f64),
    #[error("utilization {0} is not in (0, 1)")]
    Utilization(f64),
    #[error("mean service time must be positive, got {0}")]
    ServiceTime(f64),
    #[error("arrival/service statistics are not initialized")]
    Uninitialized,
    #[error("utility undefined for zero total rate")]
    ZeroRate,
    #[error("invalid GoP structure: {0}")]
    Gop(String),
}

/// Failures of the header-option codec.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("buffer holds {0} bytes, option needs 12")]
    Short(usize),
    #[error("option kind {0:#04x} is not the frame-metadata kind")]
    Kind(u8),
    #[error("option length {0} is not 12")]
    Length(u8),
    #[error("reserved flag bits set: {0:#04x}")]
    Flags(u8),
    #[error("{field} = {value} does not fit the option layout")]
    Range { field: &'static str, value: u64 },
}

/// Reading or writing a frame trace file.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace error: {0}")]
    Invalid(String),
}

/// Invalid or unreadable simulation configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Syntax(String),
    #[error("config field `{path}`: {msg}")]
    Field { path: String, msg: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl ConfigError {
    pub fn field(path: impl Into<String>, msg: impl Into<String>) -> Self {
        ConfigError::Field {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
