use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bands {0} and {1} overlap in frequency")]
    PlanOverlap(String, String),

    #[error("band {band}: {count} channels do not fit {bandwidth_hz} Hz on the grid ({slots} slots)")]
    PlanInconsistent {
        band: String,
        count: usize,
        bandwidth_hz: f64,
        slots: usize,
    },

    #[error("{0} not found")]
    NotFound(String),

    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("channel {0} is excluded")]
    ExcludedChannel(usize),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("calibration infeasible for band {band}: limited by the {limiting_term} term")]
    CalibrationInfeasible { band: String, limiting_term: String },

    #[error("bad labeling: {0}")]
    BadLabeling(String),

    #[error("bad cardinality: {0} points is not a power of two >= 2")]
    BadCardinality(usize),

    #[error("equalizer diverged at block {block}")]
    EqualizerDiverged { block: usize },

    #[error("measurement failed: only {valid} of {total} traces were valid")]
    MeasurementFailed { valid: usize, total: usize },

    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::PlanOverlap(..)
                | Error::PlanInconsistent { .. }
                | Error::Config { .. }
                | Error::Validation(_)
                | Error::Parse { .. }
                | Error::BadLabeling(_)
                | Error::BadCardinality(_)
                | Error::InvalidArgument(_)
        )
    }
}
