use thiserror::Error;

use crate::coupling::CouplingError;
use crate::les::LesError;

/// Failure of a model entry procedure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Les(#[from] LesError),
}

impl From<crate::runtime::RuntimeError> for ModelError {
    fn from(e: crate::runtime::RuntimeError) -> Self {
        ModelError::Coupling(e.into())
    }
}
