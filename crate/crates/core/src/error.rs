use thiserror::Error;

/// Errors raised by model evaluation, steppers and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("mass matrix is not positive definite at q = {q:?}")]
    SingularMass { q: Vec<f64> },
    #[error("constraint Jacobian is singular (locked mechanism?)")]
    SingularConstraint,
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("scheme {scheme} cannot be used with this model: {reason}")]
    IncompatibleScheme { scheme: &'static str, reason: String },
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error("degenerate regression input: {0}")]
    Degenerate(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
