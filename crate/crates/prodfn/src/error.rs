//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by generation, estimation, and the study runner.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, scenario fields, or run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A quantity violated its domain (non-positive input, wrong family, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A scalar solver failed to bracket or converge.
    #[error("solver error: {0}")]
    Solver(String),

    /// Panel generation produced an observation violating its invariants.
    #[error("generation error: {0}")]
    Generation(String),

    /// Recovery from the accounting identity is impossible for these inputs.
    #[error("recovery error: {0}")]
    Recovery(String),

    /// A least-squares or moment fit failed (rank deficiency, no feasible step, ...).
    #[error("fit error: {0}")]
    Fit(String),

    /// Estimation failed inside a named stage.
    #[error("estimation error in {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 1 config, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Domain(_)
            | Error::Solver(_)
            | Error::Generation(_)
            | Error::Recovery(_)
            | Error::Fit(_) => 2,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Io(_) => 3,
            Error::Serde(_) => 1,
        }
    }
}
