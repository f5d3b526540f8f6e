use thiserror::Error;

use crate::align::AlignError;
use crate::config::ConfigError;
use crate::corpus::CorpusError;
use crate::metrics::MetricsError;
use crate::report::ReportError;
use crate::textnorm::ConventionError;

/// Crate-level error; each module keeps its own error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Convention(#[from] ConventionError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl Error {
    /// True when the failure came from the filesystem rather than from the
    /// content of an input.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Corpus(e) => e.is_io(),
            Error::Config(e) => e.is_io(),
            Error::Report(ReportError::Io { .. }) => true,
            _ => false,
        }
    }
}
