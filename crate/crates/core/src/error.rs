use std::io;

use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are grouped into families (`Io`, validation, numeric, not found)
/// so front ends can map them onto stable exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("step {step} out of range (schedule has {steps} steps)")]
    StepOutOfRange { step: usize, steps: usize },

    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("file truncated: {0}")]
    Truncated(String),

    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("not found: {0}")]
    NotFound(String),
}

/// Coarse error families, used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Io,
    Validation,
    Numeric,
    NotFound,
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::Io(e) if e.kind() == io::ErrorKind::NotFound => ErrorFamily::NotFound,
            Error::Io(_)
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated(_)
            | Error::ChecksumMismatch { .. }
            | Error::Malformed(_) => ErrorFamily::Io,
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::StepOutOfRange { .. } => {
                ErrorFamily::Validation
            }
            Error::NonFinite(_) => ErrorFamily::Numeric,
            Error::NotFound(_) => ErrorFamily::NotFound,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
