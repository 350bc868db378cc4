//! Run manifests: every command records its full effective configuration so
//! reported numbers are re-derivable. The manifest id is a deterministic
//! hash of the command and configuration, so output files that embed it stay
//! byte-identical across reruns with the same flags.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub manifest_id: String,
    pub command: String,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    /// Full effective settings: seed, alpha, init policy, grid, GA params...
    pub config: Value,
    /// Paths of the files this run produced.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn start(command: &str, config: Value) -> Self {
        let manifest_id = manifest_id(command, &config);
        Self {
            manifest_id,
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: chrono::Utc::now().to_rfc3339(),
            finished: String::new(),
            config,
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(&mut self) {
        self.finished = chrono::Utc::now().to_rfc3339();
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text)
    }
}

/// Deterministic id: FNV-1a over the command name and canonical config JSON.
pub fn manifest_id(command: &str, config: &Value) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut write = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    write(command.as_bytes());
    write(&[0x1e]);
    write(serde_json::to_string(config).expect("config serializes").as_bytes());
    format!("m{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn id_is_deterministic_and_config_sensitive() {
        let a = manifest_id("score", &json!({"seed": 1, "alpha": 0.5}));
        let b = manifest_id("score", &json!({"seed": 1, "alpha": 0.5}));
        let c = manifest_id("score", &json!({"seed": 2, "alpha": 0.5}));
        let d = manifest_id("eval", &json!({"seed": 1, "alpha": 0.5}));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn manifest_records_lifecycle() {
        let mut m = RunManifest::start("score", json!({"seed": 7}));
        m.add_output(Path::new("out.jsonl"));
        m.finish();
        assert!(m.manifest_id.starts_with('m'));
        assert!(!m.started.is_empty());
        assert!(!m.finished.is_empty());
        assert_eq!(m.outputs, vec!["out.jsonl"]);
    }
}
