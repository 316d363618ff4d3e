//! Output plumbing: six-significant-digit tables, CSV/JSON emission.

use std::io::Write;
use std::path::{Path, PathBuf};

/// Six significant digits; tables re-parse to exactly the printed value.
pub fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub fn write_out(out: &Option<PathBuf>, content: &str) -> std::io::Result<()> {
    match out {
        Some(path) => write_file(path, content),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()
        }
    }
}

fn write_file(path: &Path, content: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)
}
