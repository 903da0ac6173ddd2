use std::path::{Path, PathBuf};

use isingarray_core::ising::IsingError;
use isingarray_core::train::TrainError;
use isingarray_core::vlbi::VlbiError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("site file {}: {source}", path.display())]
    Sites {
        path: PathBuf,
        #[source]
        source: VlbiError,
    },
    #[error("{} would contain a non-finite value", path.display())]
    NonFinite { path: PathBuf },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Vlbi(#[from] VlbiError),
    #[error(transparent)]
    Ising(#[from] IsingError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
