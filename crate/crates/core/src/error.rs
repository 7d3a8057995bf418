use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),
    #[error("infeasible flow: matched mass {matched} exceeds min(supply {supply}, demand {demand})")]
    InfeasibleFlow { matched: f64, supply: f64, demand: f64 },
    #[error("sinkhorn did not converge after {iterations} iterations (marginal defect {defect:e})")]
    Convergence { iterations: usize, defect: f64 },
    #[error("oracle limited to 16x16 balanced problems, got {rows}x{cols}")]
    OracleTooLarge { rows: usize, cols: usize },
    #[error("target node {0} has no connected source")]
    IsolatedNode(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("support mask has no foreground cell")]
    EmptySupportForeground,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Attaches the file the error was raised for.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::InFile { .. }) => e,
            e => Error::InFile { path: path.into(), source: Box::new(e) },
        }
    }

    /// The innermost error, with file context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFile { source, .. } => source.root(),
            e => e,
        }
    }
}
