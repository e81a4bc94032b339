use std::path::{Path, PathBuf};
use std::time::Instant;

use motok::Result;
use serde::Serialize;
use serde_json::Value;

/// What ran, with which settings, reading and writing which files.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: &'static str,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> (Self, Instant) {
        let m = Self {
            command: command.to_string(),
            config: Value::Null,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION"),
            wall_clock_secs: 0.0,
        };
        (m, Instant::now())
    }

    pub fn write(mut self, started: Instant, path: &Path) -> Result<()> {
        self.wall_clock_secs = started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text + "\n").map_err(|e| crate::io_err(path, e))
    }
}

/// `out.ext` → `out.ext.manifest.json`.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}
