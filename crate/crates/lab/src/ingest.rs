use std::path::Path;

use lfunlab_core::modforms::{parse_qexp, Newform};

use crate::error::{LabError, Result};

/// Reads a q-expansion file; every relation is checked before the form is returned.
pub fn ingest_qexp(path: &Path) -> Result<Newform> {
    let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_qexp(&text)?)
}
