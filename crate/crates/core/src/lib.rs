pub mod cli;
pub mod dataio;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod oracle;
pub mod sanitizer;

pub use error::{Error, Result};
