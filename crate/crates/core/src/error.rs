use thiserror::Error;

use crate::matfun::MatfunError;
use crate::problem::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid problem: {}", join(.0))]
    Invalid(Vec<Violation>),
    /// `1 − B e^{aA}` is numerically singular.
    #[error("problem is not well posed: monodromy reciprocal condition {rcond:e}")]
    NotWellPosed { rcond: f64 },
    #[error(transparent)]
    Matfun(#[from] MatfunError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
