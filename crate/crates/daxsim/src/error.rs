use std::path::PathBuf;

use daxsim_core::config::FieldError;
use daxsim_core::report::CompareError;
use daxsim_core::RunError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Syntax { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid configuration{}", list(.0))]
    Invalid(Vec<FieldError>),
    #[error(transparent)]
    Run(RunError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("bad sweep axis `{0}`: {1}")]
    Axis(String, String),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl From<RunError> for Error {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(errs) => Error::Invalid(errs),
            e => Error::Run(e),
        }
    }
}

fn list(errs: &[FieldError]) -> String {
    errs.iter().map(|e| format!("\n  {e}")).collect()
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
