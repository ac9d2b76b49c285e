use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("kernel does not fit Fourier plane: order {order} needs {needed_px} px, DMD has {available_px} px")]
    KernelDoesNotFit {
        order: i32,
        needed_px: usize,
        available_px: usize,
    },

    #[error("diffraction order {0} is outside the supported range")]
    UnsupportedOrder(i32),

    #[error("frame overflow: {needed:?} px does not fit frame {frame:?}")]
    FrameOverflow {
        needed: (usize, usize),
        frame: (usize, usize),
    },

    #[error("kernel windows overlap at diffraction order {0}")]
    OverlappingWindows(i32),

    #[error("crosstalk not blocked: aperture regions {0} and {1} overlap")]
    CrosstalkNotBlocked(usize, usize),

    #[error("tile capacity exceeded: {requested} images for {capacity} cells")]
    CapacityExceeded { capacity: usize, requested: usize },

    #[error("unknown generation preset `{0}`")]
    UnknownPreset(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {message} (at byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by the binary to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Numerical(_) => ErrorKind::Numerical,
            Error::Format { .. } | Error::Io(_) | Error::Json(_) => ErrorKind::Data,
            Error::DimensionMismatch { .. } | Error::FrameOverflow { .. } | Error::CapacityExceeded { .. } => {
                ErrorKind::Data
            }
            _ => ErrorKind::Usage,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
