//! Storage formats, benchmarks, the HTTP service and the command-line tool
//! around [`condra_core`].

pub mod bench;
mod error;
pub mod format;
pub mod service;

pub use condra_core;
pub use error::{Error, Result};
