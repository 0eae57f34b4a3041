//! File formats and command line for the `unfold-core` cascade.

pub mod cli;
pub mod error;
pub mod io;

pub use error::{Error, Result};
