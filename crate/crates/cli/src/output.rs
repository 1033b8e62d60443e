//! Buffered CSV outputs with metadata sidecars, written all-or-nothing.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Git-style object hash (`sha256("blob <len>\0" ++ bytes)`).
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("sha256:{}", hex::encode(h.finalize()))
}

pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>, Value)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    /// Queues `name` with its bytes and file-specific metadata.
    pub fn add(&mut self, name: &str, bytes: Vec<u8>, extra: Value) {
        self.files.push((name.to_string(), bytes, extra));
    }

    /// Writes every queued CSV and its `<name>.meta.json` sidecar, which
    /// merges `common` with the file's own metadata and content hash. On any
    /// failure the files written so far are removed.
    pub fn commit(self, common: &Value) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        let result = (|| {
            for (name, bytes, extra) in &self.files {
                let path = self.dir.join(name);
                let mut meta = common.clone();
                meta["file"] = json!(name);
                meta["content_hash"] = json!(content_hash(bytes));
                meta["details"] = extra.clone();
                fs::write(&path, bytes)?;
                written.push(path.clone());
                let side = self.dir.join(format!("{name}.meta.json"));
                let text = serde_json::to_vec_pretty(&meta).map_err(std::io::Error::other)?;
                fs::write(&side, text)?;
                written.push(side);
            }
            Ok(())
        })();
        match result {
            Ok(()) => Ok(written),
            Err(e) => {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_object_format() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            content_hash(b"hello\n"),
            "sha256:2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn failure_removes_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new(dir.path());
        out.add("a.csv", b"x\n1\n".to_vec(), json!({}));
        // a directory in the way makes the second write fail
        fs::create_dir(dir.path().join("b.csv")).unwrap();
        out.add("b.csv", b"y\n2\n".to_vec(), json!({}));
        assert!(out.commit(&json!({})).is_err());
        assert!(!dir.path().join("a.csv").exists());
        assert!(!dir.path().join("a.csv.meta.json").exists());
    }
}
