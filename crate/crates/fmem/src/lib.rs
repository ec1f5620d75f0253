//! File formats, parallel drivers and the `fmem` command-line tool built on
//! [`fmem_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;

pub use error::{Error, Result};
