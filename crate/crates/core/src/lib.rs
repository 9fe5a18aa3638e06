//! Limited-feedback analog beamforming: channel generation, classical
//! beamformers and oracles, the feedback/beamforming networks and their
//! training harness.

pub mod chanmodel;
pub mod classicbf;
pub mod error;
pub mod lut;
pub mod models;
pub mod nncore;

pub use error::{Error, Result};
pub mod trainharness;

use std::io::{BufWriter, Write};
use std::path::Path;

/// Writes through a temporary file in the destination directory, so a failed
/// write never leaves a partial file behind.
pub(crate) fn write_atomic_with(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic_with(path, |w| Ok(w.write_all(bytes)?))
}
