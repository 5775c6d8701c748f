//! Atomic output files and the sidecar describing CSV tables.

use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

/// Writes `path` through a temporary file in the same directory that is
/// renamed into place once `fill` succeeds.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
    let mut writer = BufWriter::new(tmp);
    fill(&mut writer)?;
    writer.flush()?;
    let tmp = writer.into_inner().map_err(|e| e.into_error())?;
    tmp.persist(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    Ok(())
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Sidecar `<table>.meta.json` of a CSV table.
#[derive(Debug, Serialize)]
pub struct TableMetadata<'a> {
    pub format_version: u32,
    pub tool_version: &'static str,
    pub kind: &'a str,
    pub columns: Vec<&'a str>,
}

impl<'a> TableMetadata<'a> {
    pub fn new(kind: &'a str, header: &'a str) -> Self {
        Self {
            format_version: bellcheck::io::FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            kind,
            columns: header.split(',').collect(),
        }
    }

    pub fn write_for(&self, table: &Path) -> Result<()> {
        write_json(&bellcheck::io::metadata_path(table), self)
    }
}
