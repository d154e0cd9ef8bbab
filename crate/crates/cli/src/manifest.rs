use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Fields that record elapsed time and are excluded from stable digests.
const TIMING_FIELDS: &[&str] = &["wall_time_s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    /// Digest of the raw bytes.
    pub sha256: String,
    /// Digest with timing fields blanked; equal across reruns.
    pub stable_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full argument vector, program name first.
    pub argv: Vec<String>,
    pub cwd: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Every resolved setting the command used.
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for f in TIMING_FIELDS {
                map.remove(*f);
            }
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// File content with timing fields removed: JSON keys are dropped (also in
/// JSON lines), CSV columns are blanked.
pub fn stable_content(path: &Path, bytes: &[u8]) -> Vec<u8> {
    let Ok(text) = std::str::from_utf8(bytes) else {
        return bytes.to_vec();
    };
    if let Ok(mut v) = serde_json::from_str::<Value>(text) {
        strip_timing(&mut v);
        return v.to_string().into_bytes();
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "jsonl" {
        let mut out = String::new();
        for line in text.lines() {
            match serde_json::from_str::<Value>(line) {
                Ok(mut v) => {
                    strip_timing(&mut v);
                    out.push_str(&v.to_string());
                }
                Err(_) => out.push_str(line),
            }
            out.push('\n');
        }
        return out.into_bytes();
    }
    if ext == "csv" {
        let mut lines = text.lines();
        let Some(header) = lines.next() else {
            return bytes.to_vec();
        };
        let masked: Vec<usize> = header
            .split(',')
            .enumerate()
            .filter(|(_, h)| TIMING_FIELDS.contains(h))
            .map(|(i, _)| i)
            .collect();
        let mut out = format!("{header}\n");
        for line in lines {
            let cells: Vec<&str> = line
                .split(',')
                .enumerate()
                .map(|(i, c)| if masked.contains(&i) { "" } else { c })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        return out.into_bytes();
    }
    bytes.to_vec()
}

pub fn digest(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
        stable_sha256: sha256_hex(&stable_content(path, &bytes)),
    })
}

/// Where the manifest of a run whose primary output is `out` lives.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        return out.join("manifest.json");
    }
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
