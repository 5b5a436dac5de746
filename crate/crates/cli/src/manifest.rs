use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub files: usize,
    pub sha256: String,
}

/// Hash over the relative path and bytes of every file, in the given order.
pub fn fingerprint(root: &Path, files: &[PathBuf]) -> Result<Fingerprint, Failure> {
    let mut hasher = Sha256::new();
    for path in files {
        let rel = path.strip_prefix(root).unwrap_or(path);
        let name: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        hasher.update(name.join("/").as_bytes());
        hasher.update([0u8]);
        let bytes = fs::read(path).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    let sha256 = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(Fingerprint {
        files: files.len(),
        sha256,
    })
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Run manifest, written before training starts and completed afterwards.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub config: Vec<(&'static str, String)>,
    pub config_hash: u64,
    pub precision: String,
    pub data: PathBuf,
    pub cache: Option<PathBuf>,
    pub fingerprint: Fingerprint,
    pub split: (usize, usize),
    pub outputs: Vec<(&'static str, PathBuf)>,
    pub reproduce: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub results: Vec<(&'static str, f64)>,
}

impl Manifest {
    pub fn to_json(&self) -> Value {
        let config: Map<String, Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.to_string(), Value::String(v.clone())))
            .collect();
        let outputs: Map<String, Value> = self
            .outputs
            .iter()
            .map(|(k, p)| (k.to_string(), Value::String(p.display().to_string())))
            .collect();
        let results: Map<String, Value> = self.results.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
        json!({
            "config": config,
            "config_hash": format!("{:08x}", self.config_hash),
            "precision": self.precision,
            "dataset": {
                "root": self.data.display().to_string(),
                "cache": self.cache.as_ref().map(|p| p.display().to_string()),
                "files": self.fingerprint.files,
                "sha256": self.fingerprint.sha256,
                "train": self.split.0,
                "test": self.split.1,
            },
            "outputs": outputs,
            "reproduce": self.reproduce,
            "started_unix": self.started_unix,
            "finished_unix": self.finished_unix,
            "results": results,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(&self.to_json()).expect("manifest is plain JSON");
        fs::write(path, text + "\n").map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}
