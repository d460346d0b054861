use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not a supported prime power (prime, or 2^e with e <= 16)")]
    NotPrimePower(u64),

    #[error("division by zero in GF({0})")]
    DivisionByZero(u32),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("work budget exceeded: need {needed} operations, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("matrix is not constant-weight")]
    NotConstantWeight,

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}
