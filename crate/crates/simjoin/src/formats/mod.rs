//! On-disk formats.

pub mod model;
pub mod results;
pub mod table;
pub mod vectors;

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = vectors::create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|source| Error::Json { context: path.display().to_string(), source })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = vectors::open_file(path)?;
    serde_json::from_reader(r).map_err(|source| Error::Json { context: path.display().to_string(), source })
}
