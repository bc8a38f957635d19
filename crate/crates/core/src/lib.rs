pub mod cli;
pub mod codebook;
pub mod encoding;
pub mod error;
pub mod features;
pub mod io;
pub mod models;
pub mod nn;
pub mod report;
pub mod seed;

pub use error::{Error, ErrorKind, Result};
