use thiserror::Error;

use crate::lp::LpError;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library. Item and agent positions in messages are
/// 1-based, matching the document formats.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed document: {0}")]
    Document(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("negative value {value} at item {item}, agent {agent}")]
    NegativeValue { item: usize, agent: usize, value: f64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("an instance needs at least one item and two agents (got m={items}, n={agents})")]
    TooSmall { items: usize, agents: usize },

    #[error("agent {agent} values every item at zero; cannot normalize")]
    ZeroColumn { agent: usize },

    #[error("instance is not normalized")]
    NotNormalized,

    #[error("agent {agent} out of range 1..={agents}")]
    AgentOutOfRange { agent: usize, agents: usize },

    #[error("item {item} out of range 1..={items}")]
    ItemOutOfRange { item: usize, items: usize },

    #[error("envy pair requires two distinct agents, got ({0}, {0})")]
    SameAgent(usize),

    #[error("bundles are limited to {max} items, instance has {items}")]
    TooManyItems { items: usize, max: usize },

    #[error("row {row} of the fractional point is not on the simplex (sum {sum})")]
    NotInPolytope { row: usize, sum: f64 },

    #[error("encoding constant {value} must exceed 2V = {bound}")]
    EncodingConstant { value: f64, bound: f64 },

    #[error("parameter {name} is invalid: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("{count} allocations exceed the enumeration limit {limit}")]
    TooLarge { count: f64, limit: u64 },

    #[error("perturbed map left the box at ({row}, {col}): value {value}, box [-{bound}, 0]")]
    SelfMap {
        row: usize,
        col: usize,
        value: f64,
        bound: f64,
    },

    #[error(transparent)]
    Lp(#[from] LpError),
}

impl Error {
    pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
