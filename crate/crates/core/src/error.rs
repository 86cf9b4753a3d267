use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: expected {expected}")]
    Parse { line: usize, col: usize, expected: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("arity mismatch for `{name}`: declared {expected}, used with {found}")]
    ArityMismatch { name: String, expected: usize, found: usize },
    #[error("probability {value} for `{what}` is outside [0, 1]")]
    ProbabilityOutOfRange { what: String, value: String },
    #[error("undeclared constant `{0}`")]
    UndeclaredConstant(String),
    #[error("invalid name `{0}`")]
    InvalidName(String),
    #[error("relation `{name}` of arity {arity} exceeds the ranking cap")]
    UnsupportedArity { name: String, arity: usize },
    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),
    #[error("more than one left or right unary symbol")]
    MultipleUnaries,
    #[error("singular matrix")]
    SingularMatrix,
    #[error("non-integral solution at {0}")]
    NonIntegralSolution(String),
    #[error("no valid parameter grid after {0} attempts")]
    GridExhausted(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
