//! Job queue, result cache, HTTP API and command line for hpolens.

pub mod api;
pub mod cache;
pub mod cli;
pub mod error;
pub mod jobs;
pub mod overview;
pub mod plugins;
pub mod registry;

pub use error::RequestError;
