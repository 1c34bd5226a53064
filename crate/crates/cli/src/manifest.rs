//! Run manifest written next to every run's outputs.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{write_json, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    /// SHA-256 of the configuration bytes, or of the command line when the
    /// run takes no configuration file.
    pub config_sha256: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl Manifest {
    pub fn start(command: Vec<String>, config: Option<&[u8]>) -> Self {
        let hashed = config.map(<[u8]>::to_vec).unwrap_or_else(|| command.join("\u{1f}").into_bytes());
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            config_sha256: sha256_hex(&hashed),
            started_unix: unix_now(),
            finished_unix: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, dir: &Path) -> Result<(), IoError> {
        self.finished_unix = unix_now();
        self.outputs.sort();
        write_json(&dir.join("manifest.json"), &self, "manifest")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn hash_tracks_config_bytes() {
        let a = Manifest::start(vec!["trace".into()], Some(b"x = 1"));
        let b = Manifest::start(vec!["other".into()], Some(b"x = 1"));
        let c = Manifest::start(vec!["trace".into()], Some(b"x = 2"));
        assert_eq!(a.config_sha256, b.config_sha256);
        assert_ne!(a.config_sha256, c.config_sha256);
        assert!(a.started_unix > 0.0);
    }
}
