//! Demand-driven model coupling runtime, a miniature LES and parallel SOR
//! pressure solvers.

pub mod cli;
pub mod coupling;
pub mod driver;
pub mod error;
pub mod field;
pub mod les;
pub mod runtime;
pub mod scenario;
pub mod sor;

pub use error::ModelError;
