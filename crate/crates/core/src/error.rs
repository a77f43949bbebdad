use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("state error: {0}")]
    State(String),
}

/// Errors from reading or writing the explicit model format.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("semantic error at line {line}: {message}")]
    Semantic { line: usize, message: String },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropertyError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown comparison operator {operator:?} at position {position}")]
    UnknownOperator { position: usize, operator: String },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("threshold bound {0} outside [0, 1]")]
    BoundOutOfRange(f64),
    #[error("threshold check requires a threshold-mode property")]
    QueryMode,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckError {
    #[error(transparent)]
    Property(#[from] PropertyError),
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    Convergence { sweeps: usize, residual: f64 },
    #[error("state {0} has no enabled action")]
    NoChoices(usize),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("state-space cap of {0} states exceeded")]
    StateCap(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Property(#[from] PropertyError),
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("policy is undefined at state {0}")]
    PartialPolicy(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttributionError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("ranking arity mismatch: {0} vs {1}")]
    Arity(usize, usize),
    #[error("schema mismatch between policy and data")]
    Schema,
}

#[derive(Debug, Error)]
pub enum RashomonError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error("schema mismatch between models")]
    SchemaMismatch,
    #[error("empty policy collection")]
    Empty,
    #[error("{0}")]
    Invalid(String),
}
