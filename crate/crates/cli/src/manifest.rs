use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

/// Provenance embedded in every emitted file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub timestamp: u64,
    pub version: &'static str,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<PathBuf>, overrides: &[(String, String)], seed: u64, out: Option<PathBuf>) -> Self {
        Self {
            command: command.to_string(),
            config,
            overrides: overrides.iter().map(|(k, v)| format!("{k}={v}")).collect(),
            seed,
            out,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    /// `# key: value` lines for CSV headers; the timestamp comes last.
    pub fn comment_lines(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into());
        let overrides = if self.overrides.is_empty() { "-".to_string() } else { self.overrides.join(" ") };
        format!(
            "# command: {}\n# config: {}\n# overrides: {}\n# seed: {}\n# out: {}\n# version: {}\n# timestamp: {}\n",
            self.command,
            path(&self.config),
            overrides,
            self.seed,
            path(&self.out),
            self.version,
            self.timestamp
        )
    }
}
