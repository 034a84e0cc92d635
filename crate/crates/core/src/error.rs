use std::fmt;

use thiserror::Error;

/// A primitive of the differentiation engine that rejected its operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Div,
    Ln,
    Sqrt,
    Pow,
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Primitive::Div => "div",
            Primitive::Ln => "ln",
            Primitive::Sqrt => "sqrt",
            Primitive::Pow => "pow",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in `{primitive}`: operand {operand}")]
    Domain { primitive: Primitive, operand: f64 },

    #[error("point outside the domain: {0}")]
    OutsideDomain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value in {context}")]
    Numeric { context: String },

    #[error("degenerate boundary normal: point coincides with patch center ({x}, {y})")]
    DegenerateNormal { x: f64, y: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch}: total loss {total}")]
    Divergence { epoch: u64, total: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("corrupt or incompatible file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn numeric_err(context: impl Into<String>) -> Error {
    Error::Numeric {
        context: context.into(),
    }
}
