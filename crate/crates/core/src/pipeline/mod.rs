//! End-to-end episode runner and seed suites behind the `match` binary.

mod config;
mod run;
mod suite;

use std::fs;
use std::path::Path;

pub use config::{parse_seeds, OtMode, PipelineConfig};
pub use run::{load_episode, run_match, RunSummary};
pub use suite::{run_suite, SuiteConfig, SuiteReport, VariantSummary};

use crate::error::{Error, Result};

/// Writes `bytes` to a hidden sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
