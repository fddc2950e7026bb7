use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command: the exact arguments, the resolved
/// configuration, the seed and the digests of every input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, args: Vec<String>, config: serde_json::Value, seed: Option<u64>) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            subcommand: subcommand.into(),
            args,
            config,
            seed,
            inputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        if self.inputs.iter().any(|i| i.path == path) {
            return Ok(());
        }
        let sha256 = digest(path)?;
        self.inputs.push(InputDigest { path: path.to_path_buf(), sha256 });
        Ok(())
    }
}

pub fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Write a JSON report with the manifest embedded under `"manifest"`.
pub fn emit_json(out: Option<&Path>, report: serde_json::Value, manifest: &RunManifest) -> Result<()> {
    let mut map = match report {
        serde_json::Value::Object(map) => map,
        other => {
            let mut map = serde_json::Map::new();
            map.insert("report".into(), other);
            map
        }
    };
    map.insert("manifest".into(), serde_json::to_value(manifest)?);
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(map))?;
    text.push('\n');
    write_bytes(out, text.as_bytes())
}

/// Write a CSV table; its manifest goes to `<out>.manifest.json`, or to
/// stderr when the table goes to stdout.
pub fn emit_csv(out: Option<&Path>, body: &[u8], manifest: &RunManifest) -> Result<()> {
    write_bytes(out, body)?;
    let text = serde_json::to_string_pretty(manifest)? + "\n";
    match out {
        Some(path) => fs::write(sidecar_path(path), text).with_context(|| format!("writing manifest for {}", path.display())),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}
