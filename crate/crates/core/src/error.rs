use alloc::string::String;
use core::fmt;

pub type CoreResult<T> = Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Nothing to score.
    EmptyInput,
    /// A batch with zero rows was appended.
    EmptyBatch,
    LengthMismatch {
        expected: usize,
        found: usize,
    },
    /// Columns of one batch disagree on row count.
    RaggedBatch {
        column: String,
        expected: usize,
        found: usize,
    },
    SchemaMismatch(String),
    IncompatibleSchemas(String),
    UnknownModule(String),
    UnknownAveraging(String),
    UnknownLabel(String),
    EmptyReferenceSet {
        index: usize,
    },
    PositiveLogProb {
        example: usize,
        position: usize,
    },
    NonFiniteLogProb {
        example: usize,
        position: usize,
    },
    IterationOutOfRange {
        iteration: usize,
        iterations: usize,
    },
    /// The statistic was non-finite on a bootstrap resample.
    DegenerateMetric {
        iteration: usize,
    },
    InvalidParameter {
        name: String,
        reason: String,
    },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::EmptyInput => f.write_str("empty input: nothing to compute"),
            CoreError::EmptyBatch => f.write_str("empty batch: a batch needs at least one row"),
            CoreError::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected} items, found {found}")
            }
            CoreError::RaggedBatch { column, expected, found } => write!(
                f,
                "ragged batch: column `{column}` has {found} rows, expected {expected}"
            ),
            CoreError::SchemaMismatch(msg) => write!(f, "schema mismatch: {msg}"),
            CoreError::IncompatibleSchemas(msg) => write!(f, "incompatible schemas: {msg}"),
            CoreError::UnknownModule(id) => write!(f, "unknown module `{id}`"),
            CoreError::UnknownAveraging(name) => write!(f, "unknown averaging `{name}`"),
            CoreError::UnknownLabel(label) => write!(f, "label `{label}` is not in the label space"),
            CoreError::EmptyReferenceSet { index } => {
                write!(f, "prediction {index} has an empty reference set")
            }
            CoreError::PositiveLogProb { example, position } => write!(
                f,
                "log-probability at example {example}, position {position} is positive"
            ),
            CoreError::NonFiniteLogProb { example, position } => write!(
                f,
                "log-probability at example {example}, position {position} is not finite"
            ),
            CoreError::IterationOutOfRange { iteration, iterations } => write!(
                f,
                "bootstrap iteration {iteration} out of range for {iterations} iterations"
            ),
            CoreError::DegenerateMetric { iteration } => write!(
                f,
                "statistic is not finite on bootstrap iteration {iteration}"
            ),
            CoreError::InvalidParameter { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
        }
    }
}

impl core::error::Error for CoreError {}
