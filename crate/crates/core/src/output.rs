//! Output files with a `#`-prefixed metadata header.
//!
//! Only the `created` line depends on the wall clock, so reruns with the same
//! configuration and seed produce identical data rows.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Metadata {
    pub fn write_header<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(w, "# burst-pide {VERSION}")?;
        writeln!(w, "# command = {}", self.command)?;
        writeln!(w, "# config_sha256 = {}", self.config_hash)?;
        match self.seed {
            Some(s) => writeln!(w, "# seed = {s}")?,
            None => writeln!(w, "# seed = none")?,
        }
        writeln!(w, "# created_unix = {created}")
    }
}

/// Creates `dir/name` (and parents) and writes the header.
pub fn create(dir: &Path, name: &str, meta: &Metadata) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(&path)?);
    meta.write_header(&mut w)?;
    Ok((path, w))
}

/// Lines of a file that are not part of the header.
pub fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}
