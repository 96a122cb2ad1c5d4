use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Where a binary file ended early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Header,
    Record(u32),
    Tensor(u32),
    Checksum,
}

impl std::fmt::Display for Section {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Section::Header => write!(f, "header"),
            Section::Record(i) => write!(f, "record {i}"),
            Section::Tensor(i) => write!(f, "tensor {i}"),
            Section::Checksum => write!(f, "checksum"),
        }
    }
}

/// Problems with a dataset or checkpoint file.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("file truncated in {0}")]
    Truncated(Section),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("invalid content: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] heliogen_core::Error),
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage or configuration, 3 I/O and file
    /// formats, 4 numeric failures.
    pub fn exit_code(&self) -> i32 {
        use heliogen_core::Error as C;
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } | Error::Csv(_) => 3,
            Error::Core(C::InvalidArgument(_))
            | Error::Core(C::HeightOutOfRange { .. })
            | Error::Core(C::SlotOutOfRange { .. })
            | Error::Core(C::UnknownBoundaryCondition(_)) => 2,
            Error::Core(_) => 4,
        }
    }
}
