//! Experiment runner behind the `randesign` binary.
//!
//! Each subcommand is a plain function so the integration tests can drive
//! it without spawning a process.

pub mod bounds;
pub mod config;
pub mod experiment;
pub mod sketch_cmd;
pub mod tails;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOpts {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
