use std::path::Path;

use serde::Deserialize;

pub const CONFIG_ENV: &str = "SIGLANG_CONFIG";

/// Config-file defaults. Command-line flags take precedence.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overlay {
    pub threads: Option<usize>,
    pub fps: Option<f64>,
    pub n: Option<usize>,
    pub window: Option<usize>,
    pub order: Option<usize>,
    pub alpha: Option<f64>,
    pub temperature: Option<f64>,
    pub scale: Option<f64>,
    pub band: Option<usize>,
    pub levels: Option<Vec<f64>>,
    pub takes: Option<usize>,
}

impl Overlay {
    pub fn parse(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }
}
