//! Content-addressed response store.
//!
//! Layout is `<root>/<first two hex chars>/<digest>.txt`. Entries are staged
//! in a temporary file inside the destination directory and renamed into
//! place, so a reader either sees a complete entry or nothing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use super::GatewayError;

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

/// A response written to disk but not yet visible under its digest.
///
/// Dropping it without calling [`StagedEntry::commit`] discards the file.
pub struct StagedEntry {
    tmp: NamedTempFile,
    dest: PathBuf,
}

impl StagedEntry {
    pub fn commit(self) -> Result<PathBuf, GatewayError> {
        let dest = self.dest;
        self.tmp.persist(&dest).map_err(|e| GatewayError::Cache {
            path: dest.display().to_string(),
            source: e.error,
        })?;
        Ok(dest)
    }
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, digest: &str) -> PathBuf {
        let shard = digest.get(..2).unwrap_or("__");
        self.root.join(shard).join(format!("{digest}.txt"))
    }

    pub fn get(&self, digest: &str) -> Result<Option<String>, GatewayError> {
        let path = self.entry_path(digest);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(GatewayError::Cache {
                path: path.display().to_string(),
                source,
            }),
        }
    }

    pub fn stage(&self, digest: &str, text: &str) -> Result<StagedEntry, GatewayError> {
        let dest = self.entry_path(digest);
        let dir = dest.parent().expect("entry path has a shard directory");
        let cache_err = |source| GatewayError::Cache {
            path: dir.display().to_string(),
            source,
        };
        fs::create_dir_all(dir).map_err(cache_err)?;
        let mut tmp = tempfile::Builder::new()
            .prefix(".staging-")
            .suffix(".tmp")
            .tempfile_in(dir)
            .map_err(cache_err)?;
        tmp.write_all(text.as_bytes()).map_err(cache_err)?;
        tmp.as_file().sync_all().map_err(cache_err)?;
        Ok(StagedEntry { tmp, dest })
    }

    pub fn put(&self, digest: &str, text: &str) -> Result<PathBuf, GatewayError> {
        self.stage(digest, text)?.commit()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIGEST: &str = "ab0123456789abcdef0123456789abcdef0123456789abcdef0123456789abcd";

    #[test]
    fn layout_uses_two_char_shard() {
        let c = ResponseCache::new("/tmp/x");
        assert_eq!(c.entry_path(DIGEST), PathBuf::from(format!("/tmp/x/ab/{DIGEST}.txt")));
    }

    #[test]
    fn put_then_get() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::new(dir.path());
        assert_eq!(c.get(DIGEST).unwrap(), None);
        c.put(DIGEST, "hello").unwrap();
        assert_eq!(c.get(DIGEST).unwrap().as_deref(), Some("hello"));
    }

    #[test]
    fn uncommitted_stage_is_never_readable() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::new(dir.path());
        let staged = c.stage(DIGEST, "partial").unwrap();
        // Crash point: response received, commit not reached.
        assert_eq!(c.get(DIGEST).unwrap(), None);
        drop(staged);
        assert_eq!(c.get(DIGEST).unwrap(), None);
        let leftovers: Vec<_> = fs::read_dir(dir.path().join("ab")).unwrap().collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn stray_staging_file_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::new(dir.path());
        fs::create_dir_all(dir.path().join("ab")).unwrap();
        fs::write(dir.path().join("ab").join(".staging-x.tmp"), "half").unwrap();
        assert_eq!(c.get(DIGEST).unwrap(), None);
        c.put(DIGEST, "full").unwrap();
        assert_eq!(c.get(DIGEST).unwrap().as_deref(), Some("full"));
    }
}
