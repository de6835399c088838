use thiserror::Error;

use crate::sim::RunRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("plant step of {got} s does not match the {expected} s the delay line was sized for")]
    StepMismatch { expected: f64, got: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("unknown preset `{name}` (valid: {valid})")]
    UnknownPreset { name: String, valid: String },

    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),

    #[error("run aborted at row {row}: {cause}")]
    Aborted {
        row: usize,
        cause: Box<Error>,
        partial: Box<RunRecord>,
    },

    #[error("scenario file: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
