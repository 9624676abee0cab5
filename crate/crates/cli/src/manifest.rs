//! Run manifests and content hashes of run inputs.

use serde::Serialize;
use sha2::{Digest, Sha256};
use starflow::checks::Check;

use crate::config::ConfigEcho;

/// Hex SHA-256 of `bytes` framed as a git blob (`"blob <len>\0"` prefix).
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Input {
    pub name: String,
    pub hash: String,
}

impl Input {
    pub fn new(name: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            name: name.into(),
            hash: blob_hash(bytes),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub subcommand: &'a str,
    pub config: &'a ConfigEcho,
    pub seed: u64,
    pub version: &'a str,
    pub inputs: &'a [Input],
    pub checks: &'a [Check],
}

/// `name,status,value,threshold`.
pub fn checks_csv(checks: &[Check]) -> String {
    let mut out = String::from("name,status,value,threshold\n");
    for c in checks {
        let status = if c.passed() { "pass" } else { "fail" };
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.name, status, c.value, c.threshold
        ));
    }
    out
}
