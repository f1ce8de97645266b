use std::path::{Path, PathBuf};

use serde::Serialize;
use stsmc_core::{SCHEMA_VERSION, TOOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Sweep,
    Tune,
    Table1,
    CheckGains,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Tune => "tune",
            Command::Table1 => "table1",
            Command::CheckGains => "check-gains",
        }
    }
}

/// Provenance of a run. Contains no timestamps, so reruns with the same
/// inputs write byte-identical files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Every computation is deterministic; no seed is involved.
    pub seed_free: bool,
    pub tool_version: &'static str,
    pub schema_version: u32,
}

impl RunManifest {
    pub fn new(command: Command, config_path: Option<&Path>, output_dir: &Path) -> Self {
        Self {
            command,
            config_path: config_path.map(Path::to_path_buf),
            output_dir: output_dir.to_path_buf(),
            seed_free: true,
            tool_version: TOOL_VERSION,
            schema_version: SCHEMA_VERSION,
        }
    }

    /// Lines written as `# ` comments at the top of every CSV.
    pub fn header_lines(&self) -> Vec<String> {
        let config = self.config_path.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        vec![
            format!(
                "stsmc {} tool_version={} schema_version={}",
                self.command.name(),
                self.tool_version,
                self.schema_version
            ),
            format!("config={config} output_dir={} seed_free=true", self.output_dir.display()),
        ]
    }
}
