use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::fail::{Failure, Outcome};

/// The explicit path, or `name` inside the output directory.
pub fn resolve(explicit: &Option<PathBuf>, out_dir: &Path, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| out_dir.join(name))
}

/// `estimates.csv` -> `estimates.meta.json`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn ensure_parent(path: &Path) -> Outcome<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

pub fn csv_writer(path: &Path) -> Outcome<csv::Writer<fs::File>> {
    ensure_parent(path)?;
    csv::Writer::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    ensure_parent(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

pub const TOOL: Tool = Tool { name: "chisq-eb", version: env!("CARGO_PKG_VERSION") };
