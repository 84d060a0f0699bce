//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::optimizer::gp::GpError;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller broke a documented precondition (e.g. an unscheduled user).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible at stage `{stage}`: {detail}")]
    Infeasible { stage: &'static str, detail: String },

    #[error("geometric program failed: {0}")]
    Gp(#[from] GpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
