use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("eigensolver failed to converge")]
    ConvergenceFailure,
    #[error("linear system is singular (residual {0:e})")]
    SingularSystem(f64),
    #[error("only {available} eigenfunctions survive the discard rule, {requested} requested")]
    NotEnoughEigenfunctions { available: usize, requested: usize },

    #[error("taxonomy contains a cycle through node `{0}`")]
    CycleDetected(String),
    #[error("taxonomy has multiple roots: {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("node `{node}` references unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("duplicate taxonomy node `{0}`")]
    DuplicateNode(String),
    #[error("taxonomy has zero total items")]
    ZeroTotalItems,
    #[error("taxonomy node `{0}` has no items in its subtree")]
    EmptySubtree(String),
    #[error("unknown taxonomy node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` covers every item; similarity is undefined")]
    RootOperand(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("no labeled items")]
    NoLabels,
    #[error("item {0} is already labeled")]
    AlreadyLabeled(usize),
    #[error("missing modality `{0}`")]
    MissingModality(String),
    #[error("invalid fusion weights: {0}")]
    InvalidWeights(String),
    #[error("no unlabeled item left to query")]
    PoolExhausted,

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("infeasible concept: {0}")]
    InfeasibleConcept(String),
    #[error("no positive items")]
    NoPositives,

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn format(what: &'static str, reason: impl ToString) -> Self {
        Error::Format {
            what,
            reason: reason.to_string(),
        }
    }
}
