//! File formats, experiment harness and command-line front end for
//! learned-filter similarity joins built on [`simjoin_core`].

pub mod bench;
pub mod cli;
pub mod error;
pub mod formats;

pub use error::{Error, Result};
pub use simjoin_core as core;
