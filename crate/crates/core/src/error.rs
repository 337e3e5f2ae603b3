use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph contains a directed cycle")]
    CyclicGraph,
    #[error("structures are defined over different domains")]
    DomainMismatch,
    #[error("domain has {n} variables, above the enumeration cap of {cap}")]
    DomainTooLarge { n: usize, cap: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("line {line}: missing value for `{variable}`")]
    MissingValue { line: u64, variable: String },
    #[error("line {line}: `{value}` is not a state of `{variable}`")]
    UnknownState {
        line: u64,
        variable: String,
        value: String,
    },
    #[error("line {line}: `{value}` is not a finite number (variable `{variable}`)")]
    MalformedNumber {
        line: u64,
        variable: String,
        value: String,
    },
    #[error("line {line}: header does not match schema: {detail}")]
    HeaderMismatch { line: u64, detail: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("assignment does not cover every variable")]
    IncompleteAssignment,
    #[error("joint space of {size} configurations exceeds the cap of {cap}")]
    JointSpaceTooLarge { size: u128, cap: usize },
    #[error("prior network assigns zero mass to a configuration of `{variable}`; use a probability floor")]
    ZeroPriorMass { variable: String },
    #[error("Dirichlet exponents must be positive")]
    NonPositivePrior,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid CPT for `{variable}`: {detail}")]
    InvalidCpt { variable: String, detail: String },

    #[error("conditional variances must be positive (got {0})")]
    NonPositiveVariance(f64),
    #[error("matrix is not positive definite (leading minor {minor})")]
    NotPositiveDefinite { minor: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("subset must be non-empty")]
    EmptySubset,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("continuous variable `{parent}` cannot be a parent of discrete variable `{child}`")]
    IllegalMixedStructure { parent: String, child: String },
    #[error("no normal-Wishart prior for discrete parent configuration {config:?} of {parents:?}")]
    MissingConditionalPrior {
        parents: Vec<String>,
        config: Vec<String>,
    },
    #[error("variable `{0}` has no parameters")]
    UnparameterizedNetwork(String),

    #[error("invalid network file: {0}")]
    InvalidNetwork(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
