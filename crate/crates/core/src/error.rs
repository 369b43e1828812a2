use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable {var} has cardinality {cardinality}, expected at least 2")]
    BadCardinality { var: usize, cardinality: usize },

    #[error("factor {factor}: {reason}")]
    DimensionMismatch { factor: usize, reason: String },

    #[error("factor {factor} repeats variable {var} in its arguments")]
    RepeatedArgument { factor: usize, var: usize },

    #[error("factor {factor} refers to undeclared variable {var}")]
    DanglingVariable { factor: usize, var: usize },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("unknown {kind} id {id}")]
    UnknownNode { kind: &'static str, id: usize },

    #[error("evidence sets variable {var} to state {state}, but it only has {cardinality} states")]
    EvidenceOutOfRange {
        var: usize,
        state: usize,
        cardinality: usize,
    },

    #[error("contradiction: {0}")]
    Contradiction(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("compressed graph violates count uniformity: {0}")]
    CountUniformity(String),

    #[error("forwards-backwards layers are not constant on clusternode {cluster}")]
    ScheduleNotLiftable { cluster: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("formula has {vars} unassigned variables in clauses, exact counting budget is {budget}")]
    BudgetExceeded { vars: usize, budget: usize },

    #[error("brute force enumeration limited to {limit} variables, formula has {vars}")]
    TooManyVariables { vars: usize, limit: usize },

    #[error("no unassigned variables to choose from")]
    NoCandidates,

    #[error("engines disagree: {0}")]
    EngineMismatch(String),

    #[error("external counter failed: {0}")]
    ExternalCounter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
