use std::path::PathBuf;

/// Errors of the file-format and command layer, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Threshold(String),
    #[error(transparent)]
    Core(#[from] fmem_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 2 usage, 3 data, 4 numerical failure threshold exceeded.
    pub fn exit_code(&self) -> i32 {
        use fmem_core::Error as C;
        match self {
            Error::Usage(_) => 2,
            Error::Data(_) | Error::Parse { .. } | Error::Io { .. } => 3,
            Error::Threshold(_) => 4,
            Error::Core(e) => match e {
                C::InvalidConfig(_)
                | C::WindowTooLarge { .. }
                | C::WindowTooSmall
                | C::IntensityOverflow { .. }
                | C::NotPsd(_) => 2,
                C::Numerical(_) | C::BootstrapFailures { .. } | C::RankDeficient { .. } => 4,
                C::InvalidGrid(_)
                | C::LengthMismatch { .. }
                | C::LinkDomain { .. }
                | C::InvalidData(_)
                | C::UnknownSubject(_) => 3,
            },
        }
    }
}
