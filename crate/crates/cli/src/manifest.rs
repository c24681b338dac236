//! `manifest.json`: what produced the files in an output directory.

use std::path::Path;

use rede::detector::DetectorConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub cli_version: String,
    pub library_version: String,
    pub parallel: bool,
    pub command: String,
    /// Command-line arguments after the program name, without `--out`.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub detector: Option<DetectorConfig>,
}

impl Manifest {
    pub fn new(command: &str, args: &[String], seed: Option<u64>, detector: Option<DetectorConfig>) -> Self {
        Manifest {
            tool: "rede".into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            library_version: rede::VERSION.into(),
            parallel: rede::Strategy::parallel_available(),
            command: command.into(),
            args: args.to_vec(),
            seed,
            detector,
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Runtime(rede::Error::Io { path, source: e }))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{} is not a run manifest: {e}", path.display())))
    }
}

/// Drop `--out DIR` / `--out=DIR` so replays into another directory record
/// the same manifest.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut kept = Vec::with_capacity(args.len());
    let mut skip_next = false;
    for a in args {
        if skip_next {
            skip_next = false;
        } else if a == "--out" {
            skip_next = true;
        } else if !a.starts_with("--out=") {
            kept.push(a.clone());
        }
    }
    kept
}
