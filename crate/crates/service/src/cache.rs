//! Persistent result cache: one file per cache key.
//!
//! Each file holds the key on its first line followed by the payload bytes.
//! Files are named after the SHA-256 of the key and written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

pub fn digest(key: &str) -> String {
    hex::encode(Sha256::digest(key.as_bytes()))
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{}.json", digest(key)))
    }

    /// Payload stored under `key`, if any. Entries whose header does not
    /// match the key are ignored.
    pub fn get(&self, key: &str) -> Option<Vec<u8>> {
        let bytes = fs::read(self.path(key)).ok()?;
        let newline = bytes.iter().position(|b| *b == b'\n')?;
        (&bytes[..newline] == key.as_bytes()).then(|| bytes[newline + 1..].to_vec())
    }

    pub fn put(&self, key: &str, payload: &[u8]) -> std::io::Result<()> {
        let target = self.path(key);
        let tmp = target.with_extension(format!("tmp{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(key.as_bytes())?;
            f.write_all(b"\n")?;
            f.write_all(payload)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|it| {
                it.filter_map(|e| e.ok())
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stores_and_returns_exact_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        assert_eq!(cache.get("k"), None);
        let payload = b"{\"a\":1}\n\nrest";
        cache.put("k", payload).unwrap();
        assert_eq!(cache.get("k").unwrap(), payload);
        assert_eq!(cache.len(), 1);
        let reopened = DiskCache::open(dir.path()).unwrap();
        assert_eq!(reopened.get("k").unwrap(), payload);
    }

    #[test]
    fn mismatched_headers_are_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        cache.put("k", b"x").unwrap();
        fs::write(cache.path("k"), b"other\nx").unwrap();
        assert_eq!(cache.get("k"), None);
    }
}
