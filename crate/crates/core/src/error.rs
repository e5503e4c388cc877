use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Solver,
    Consistency,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("inconsistent calibration data: {0}")]
    InconsistentData(String),

    #[error("probe too bright: no blocked-signal no-click events (setting {setting_id:?})")]
    ProbeTooBright { setting_id: Option<u64> },

    #[error("setting {setting_id}: {source}")]
    Setting {
        setting_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("solver did not converge after {iterations} iterations")]
    SolverNonConvergence { iterations: usize, last: Vec<f64> },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("consistency failure: {0}")]
    Consistency(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Domain(_)
            | Error::Data(_)
            | Error::InconsistentData(_)
            | Error::ProbeTooBright { .. }
            | Error::Io(_) => ErrorCategory::Data,
            Error::Setting { source, .. } => source.category(),
            Error::SolverNonConvergence { .. } | Error::Solver(_) => ErrorCategory::Solver,
            Error::Consistency(_) => ErrorCategory::Consistency,
        }
    }

    pub(crate) fn for_setting(self, setting_id: u64) -> Error {
        Error::Setting {
            setting_id,
            source: Box::new(self),
        }
    }
}
