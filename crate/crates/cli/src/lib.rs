//! Command-line driver for welfare-aware strategic classification
//! experiments.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;

pub use config::ExperimentConfig;

use stratwelfare::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("{0}")]
    Runtime(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_)
            | CliError::Core(
                Error::DimensionMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::UnsupportedOrder { .. }
                | Error::UnsupportedQuantity(_)
                | Error::MissingColumn(_)
                | Error::MissingGroup
                | Error::GridTooLarge { .. }
                | Error::Format(_)
                | Error::NonNumericCell { .. }
                | Error::Json(_)
                | Error::Empty(_),
            ) => 1,
            _ => 2,
        }
    }
}

pub use commands::run;
