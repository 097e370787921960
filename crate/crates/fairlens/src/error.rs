//! Error type shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Schema is malformed or does not match the data it is applied to.
    #[error("schema error: {0}")]
    Schema(String),

    /// A row failed domain validation at load time.
    #[error("row {row}: {message}")]
    RowValidation { row: usize, message: String },

    /// A group required by a metric or repair has no members.
    #[error("empty group: {0}")]
    EmptyGroup(String),

    /// An intervention names an attribute or neuron that does not exist.
    #[error("intervention target out of range: {0}")]
    BadTarget(String),

    /// Training loss became non-finite.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    /// Inconsistent configuration (bad flag combination, impossible stats).
    #[error("configuration error: {0}")]
    Config(String),

    /// A model file does not belong to the schema in use.
    #[error("fingerprint mismatch: model was trained against a different schema ({expected} vs {found})")]
    FingerprintMismatch { expected: String, found: String },

    /// A serialized artifact could not be decoded.
    #[error("malformed artifact: {0}")]
    Deserialize(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for validation problems the user
    /// can fix in their inputs, 2 for pipeline failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_)
            | Error::RowValidation { .. }
            | Error::Config(_)
            | Error::BadTarget(_)
            | Error::EmptyGroup(_)
            | Error::FingerprintMismatch { .. } => 1,
            _ => 2,
        }
    }
}
