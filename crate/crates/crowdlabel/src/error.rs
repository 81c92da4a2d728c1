use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing upstream file {0}")]
    MissingInput(PathBuf),
    #[error("run directory {0} is locked by another invocation")]
    Locked(PathBuf),
    #[error(transparent)]
    Codebook(#[from] crowdlabel_core::CodebookError),
    #[error(transparent)]
    Merge(#[from] crowdlabel_core::review::MergeError),
    #[error(transparent)]
    Review(#[from] crowdlabel_core::review::ReviewError),
    #[error(transparent)]
    Eval(#[from] crowdlabel_core::evaluation::EvalError),
    #[error(transparent)]
    Profile(#[from] crowdlabel_core::stats::ProfileError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
