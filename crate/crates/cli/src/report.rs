use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;

/// Environment variable naming the default report directory.
pub const OUT_DIR_ENV: &str = "EBSDE_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: RunConfig,
    /// Parsed input documents keyed by flag name.
    pub inputs: Map<String, Value>,
    pub results: Value,
    pub diagnostics: Value,
    #[serde(skip)]
    pub summary: Vec<String>,
}

impl Report {
    pub fn new(config: &RunConfig) -> Self {
        Report {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: config.command.name(),
            config: config.clone(),
            inputs: Map::new(),
            results: Value::Null,
            diagnostics: Value::Null,
            summary: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn results<T: Serialize>(&mut self, value: &T) {
        self.results = serde_json::to_value(value).expect("results serialise");
    }

    pub fn diagnostics<T: Serialize>(&mut self, value: &T) {
        self.diagnostics = serde_json::to_value(value).expect("diagnostics serialise");
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }
}

/// Where the report goes when `--out` is absent.
pub fn default_path(command: &str) -> PathBuf {
    let dir = env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("{}.json", command))
}

pub fn write_report(report: &Report, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::compute(format!("cannot create {}: {}", dir.display(), e)))?;
    }
    fs::write(path, report.to_json())
        .map_err(|e| CliError::compute(format!("cannot write {}: {}", path.display(), e)))
}
