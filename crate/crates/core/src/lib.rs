pub mod budget_analysis;
pub mod converters;
pub mod encoding;
pub mod error;
pub mod footprint;
pub mod hp_analysis;
pub mod objective_analysis;
pub mod run_model;
pub mod surrogate;
pub mod synthetic;

pub use error::{Error, Result, Violation};
