use thiserror::Error;

use prefixopt::env::EnvError;
use prefixopt::eval::EvalError;
use prefixopt::graph::GraphError;
use prefixopt::pareto::ParetoError;
use prefixopt::qfunc::QError;
use prefixopt::train::TrainError;

/// Categorized failures; each maps to its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("width out of range: {0}")]
    Width(String),
    #[error("evaluator failure: {0}")]
    Evaluator(String),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 3,
            CliError::Width(_) => 4,
            CliError::Evaluator(_) => 5,
            CliError::Graph(_) => 6,
            CliError::Io(_) => 7,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::WidthOutOfRange { .. } => CliError::Width(e.to_string()),
            _ => CliError::Graph(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(_) => CliError::Config(e.to_string()),
            EvalError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Evaluator(e.to_string()),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Graph(g) => g.into(),
            EnvError::Eval(v) => v.into(),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<QError> for CliError {
    fn from(e: QError) -> Self {
        match e {
            QError::Spec(_) => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::TooWide { .. } => CliError::Width(e.to_string()),
            TrainError::EvaluationFailed { .. } => CliError::Evaluator(e.to_string()),
            TrainError::Eval(v) => v.into(),
            TrainError::Env(v) => v.into(),
            TrainError::Io(io) => io.into(),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<ParetoError> for CliError {
    fn from(e: ParetoError) -> Self {
        match e {
            ParetoError::Io(io) => io.into(),
            ParetoError::BadRecord { .. } => CliError::Graph(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
