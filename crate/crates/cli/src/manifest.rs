use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written once per command, next to its outputs. `config` is the fully
/// resolved configuration: passing it back through `--config` replays the
/// run.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_path: Option<String>,
    inputs: &'a [String],
    outputs: &'a [String],
    seed: u64,
    version: &'static str,
    duration_secs: f64,
    status: &'static str,
    error: Option<String>,
    exit_code: u8,
    config: serde_json::Value,
    details: &'a serde_json::Map<String, Value>,
}

pub struct Run {
    command: &'static str,
    config_path: Option<PathBuf>,
    out: PathBuf,
    config: RunConfig,
    started: Instant,
    inputs: Vec<String>,
    outputs: Vec<String>,
    details: serde_json::Map<String, Value>,
}

impl Run {
    pub fn start(command: &'static str, config_path: Option<&Path>, out: &Path, config: &RunConfig) -> Self {
        Self {
            command,
            config_path: config_path.map(Path::to_path_buf),
            out: out.to_path_buf(),
            config: config.clone(),
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: serde_json::Map::new(),
        }
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    /// Path of an output file inside the output directory, recorded in the
    /// manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let path = self.out.join(name);
        self.outputs.push(path.display().to_string());
        path
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(key.into(), serde_json::to_value(value).expect("details serialize"));
    }

    pub fn finish(self, error: Option<&CliError>) -> Result<(), CliError> {
        let m = Manifest {
            command: self.command,
            config_path: self.config_path.as_ref().map(|p| p.display().to_string()),
            inputs: &self.inputs,
            outputs: &self.outputs,
            seed: self.config.seed,
            version: env!("CARGO_PKG_VERSION"),
            duration_secs: self.started.elapsed().as_secs_f64(),
            status: if error.is_some() { "error" } else { "ok" },
            error: error.map(ToString::to_string),
            exit_code: error.map_or(0, CliError::exit_code),
            config: replayable(&self.config),
            details: &self.details,
        };
        let path = self.out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// The resolved config minus the section seeds, which follow `seed`.
fn replayable(config: &RunConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(config).expect("config serializes");
    for section in ["surrogate", "train"] {
        if let Some(obj) = v.get_mut(section).and_then(serde_json::Value::as_object_mut) {
            obj.remove("seed");
        }
    }
    v
}
