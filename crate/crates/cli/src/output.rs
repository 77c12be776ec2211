//! Output plumbing: atomic file writes, the config hash, and the JSON shape.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::CliError;

/// FNV-1a over the canonical configuration text; embedded in every output.
pub fn config_hash(canonical: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in canonical.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Writes through a temp file and renames, so readers never see partial data.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Output(format!("{}: {e}", path.display()));
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

/// Standard JSON envelope: a `meta` object plus the task's `results`.
pub fn json_envelope(task: &str, hash: &str, extra_meta: Value, results: Value) -> Vec<u8> {
    let mut meta = json!({ "task": task, "config_hash": hash });
    if let (Value::Object(target), Value::Object(extra)) = (&mut meta, extra_meta) {
        for (k, v) in extra {
            target.insert(k, v);
        }
    }
    let doc = json!({ "meta": meta, "results": results });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("serializable document");
    bytes.push(b'\n');
    bytes
}

/// CSV provenance line placed above the header row.
pub fn csv_provenance(hash: &str) -> String {
    format!("# config={hash}\n")
}

/// Ensures the output directory exists and resolves one artifact path.
pub fn artifact_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    Ok(dir.join(name))
}
