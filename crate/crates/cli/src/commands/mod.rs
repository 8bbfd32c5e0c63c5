pub mod attack;
pub mod gen_data;
pub mod report;
pub mod train;

use std::path::Path;

use serde::Serialize;

use lil_core::error::Result;

/// Timestamps and wall times never go into result files; they live in this
/// sidecar so identical runs stay byte-identical.
#[derive(Serialize)]
pub struct MetaSidecar {
    pub command: &'static str,
    pub timestamp_unix_ms: u128,
    pub wall_time_secs: f64,
}

pub fn write_sidecar(path: &Path, command: &'static str, wall_time_secs: f64) -> Result<()> {
    let meta = MetaSidecar {
        command,
        timestamp_unix_ms: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
        wall_time_secs,
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn ensure_parent_dir(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}
