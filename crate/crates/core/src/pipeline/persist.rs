//! Versioned JSON container with a content hash.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Envelope {
    schema_version: u32,
    kind: String,
    content_sha256: String,
    payload: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical JSON of `value` (object keys sorted) and its hash.
pub fn content_hash<T: Serialize>(value: &T) -> Result<(serde_json::Value, String)> {
    let v = serde_json::to_value(value)?;
    let h = sha256_hex(serde_json::to_string(&v)?.as_bytes());
    Ok((v, h))
}

pub fn to_artifact_string<T: Serialize>(kind: &str, value: &T) -> Result<String> {
    let (payload, content_sha256) = content_hash(value)?;
    Ok(serde_json::to_string(&Envelope {
        schema_version: ARTIFACT_VERSION,
        kind: kind.to_string(),
        content_sha256,
        payload,
    })?)
}

pub fn from_artifact_str<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let env: Envelope = serde_json::from_str(text)?;
    if env.schema_version != ARTIFACT_VERSION {
        return Err(Error::Version {
            expected: ARTIFACT_VERSION,
            found: env.schema_version,
        });
    }
    if env.kind != kind {
        return Err(Error::Schema {
            expected: format!("`{kind}` artifact"),
            found: format!("`{}` artifact", env.kind),
        });
    }
    let computed = sha256_hex(serde_json::to_string(&env.payload)?.as_bytes());
    if computed != env.content_sha256 {
        return Err(Error::Integrity {
            stored: env.content_sha256,
            computed,
        });
    }
    Ok(serde_json::from_value(env.payload)?)
}

/// Writes `value` wrapped in a versioned, hashed envelope.
pub fn save_artifact<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<String> {
    let text = to_artifact_string(kind, value)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Reads an envelope, refusing version, kind or hash mismatches.
pub fn load_artifact<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_artifact_str(kind, &text)
}

/// Child seed for `label`, derived from the global seed.
pub fn derive_seed(global: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}
