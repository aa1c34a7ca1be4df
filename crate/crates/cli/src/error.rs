use std::fmt;

use hetrec_core::io::TsvError;
use hetrec_core::train::TrainError;
use hetrec_core::walk::WalkError;
use hetrec_core::GraphError;
use hetrec_ps::PsError;

/// A failure reported as `error<TAB>category<TAB>message`.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(category: &'static str, message: impl Into<String>) -> Self {
        CliError { category, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config_error", message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new("io_error", message)
    }

    /// Exit status for this category.
    pub fn exit_code(&self) -> i32 {
        match self.category {
            "usage_error" => 2,
            "config_error" => 3,
            "input_error" | "graph_error" => 4,
            "ps_error" => 5,
            "train_error" => 6,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Keep the report on one line.
        let msg = self.message.replace(['\n', '\r', '\t'], " ");
        write!(f, "error\t{}\t{}", self.category, msg)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<TsvError> for CliError {
    fn from(e: TsvError) -> Self {
        match e {
            TsvError::Io { .. } => Self::io(e.to_string()),
            TsvError::Parse { .. } => Self::new("input_error", e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        Self::new("graph_error", e.to_string())
    }
}

impl From<WalkError> for CliError {
    fn from(e: WalkError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<PsError> for CliError {
    fn from(e: PsError) -> Self {
        Self::new("ps_error", e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => Self::config(m),
            TrainError::Walk(w) => w.into(),
            TrainError::Store(s) => s.into(),
        }
    }
}
