use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the projection pipeline.
///
/// `Config` covers caller mistakes that should stop a run before any work
/// happens (bad ratios, missing seed, unreadable config). Everything else
/// is a runtime failure of the pipeline itself.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("no pixel darker than threshold {threshold}; scan contains no signature")]
    EmptySignature { threshold: u8 },

    #[error("signature {sig_width}x{sig_height} does not fit target {target_width}x{target_height}")]
    SignatureTooLarge {
        sig_width: u32,
        sig_height: u32,
        target_width: u32,
        target_height: u32,
    },

    #[error("no valid insertion position after {attempts} attempts")]
    NoValidPlacement { attempts: u32 },

    #[error("no source pixel passes the threat threshold; composite would be empty")]
    DegenerateComposite,

    #[error("{what} must lie in [{lo}, {hi}], got {value}")]
    Domain {
        what: &'static str,
        lo: f64,
        hi: f64,
        value: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("job {job} ({category}) failed after {attempts} attempts: {last_error}")]
    ExhaustedRetries {
        job: usize,
        category: String,
        attempts: u32,
        last_error: String,
    },

    #[error("{path}: {reason}")]
    Schema { path: PathBuf, reason: String },

    #[error("detection references category id {category_id} absent from the ground truth")]
    UnknownCategory { category_id: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn decode(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Decode {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
