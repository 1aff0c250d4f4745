//! Content-addressed object store on the local filesystem.
//!
//! Objects live at `<root>/aa/bb/<hex key>` where `aa` and `bb` are the first
//! two bytes of the key. Writes go to a temporary file and are renamed into
//! place, so readers never see a partial object.

use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use thiserror::Error;

use crate::hash::{sha256, to_hex, Digest};
use crate::ledger::{LedgerState, Phase};

pub const MAX_OBJECT_LEN: usize = 32 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("object of {0} bytes exceeds the 32 MiB limit")]
    TooLarge(usize),
    #[error("stored object {} does not hash to its key", to_hex(.0))]
    Integrity(Digest),
    #[error("storage i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectInfo {
    pub key: Digest,
    pub len: u64,
    pub created_at: SystemTime,
}

#[derive(Debug)]
pub struct ObjectStore {
    root: PathBuf,
}

impl ObjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        fs::create_dir_all(root.join("tmp"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &Digest) -> PathBuf {
        let hex = to_hex(key);
        self.root.join(&hex[0..2]).join(&hex[2..4]).join(hex)
    }

    /// Stores `value` and returns its key. Storing the same bytes twice keeps
    /// one copy.
    pub fn put(&self, value: &[u8]) -> Result<Digest, StorageError> {
        if value.len() > MAX_OBJECT_LEN {
            return Err(StorageError::TooLarge(value.len()));
        }
        let key = sha256(value);
        let path = self.path_for(&key);
        if path.exists() {
            return Ok(key);
        }
        fs::create_dir_all(path.parent().expect("fan-out dir"))?;
        let mut tmp = tempfile::NamedTempFile::new_in(self.root.join("tmp"))?;
        tmp.write_all(value)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(key)
    }

    /// The stored bytes, `None` if absent. Bytes that no longer hash to
    /// `key` are an error, never returned.
    pub fn get(&self, key: &Digest) -> Result<Option<Vec<u8>>, StorageError> {
        match fs::read(self.path_for(key)) {
            Ok(bytes) if sha256(&bytes) == *key => Ok(Some(bytes)),
            Ok(_) => Err(StorageError::Integrity(*key)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn contains(&self, key: &Digest) -> bool {
        self.path_for(key).is_file()
    }

    pub fn stat(&self, key: &Digest) -> Result<Option<ObjectInfo>, StorageError> {
        match fs::metadata(self.path_for(key)) {
            Ok(m) => Ok(Some(ObjectInfo { key: *key, len: m.len(), created_at: m.modified()? })),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Every stored key, sorted.
    pub fn keys(&self) -> Result<Vec<Digest>, StorageError> {
        let mut out = Vec::new();
        for a in fs::read_dir(&self.root)? {
            let a = a?;
            if a.file_name() == "tmp" || !a.file_type()?.is_dir() {
                continue;
            }
            for b in fs::read_dir(a.path())? {
                for f in fs::read_dir(b?.path())? {
                    let name = f?.file_name();
                    if let Some(k) = name.to_str().and_then(crate::hash::digest_from_hex) {
                        out.push(k);
                    }
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Removes every object not in `retain`. Takes `&mut self`: no reader or
    /// writer may run during collection.
    pub fn gc(&mut self, retain: &HashSet<Digest>) -> Result<usize, StorageError> {
        let mut removed = 0;
        for k in self.keys()? {
            if !retain.contains(&k) {
                fs::remove_file(self.path_for(&k))?;
                removed += 1;
            }
        }
        Ok(removed)
    }
}

/// Bundles and comment texts still referenced by a non-deleted report.
pub fn retain_set(state: &LedgerState) -> HashSet<Digest> {
    let mut keep = HashSet::new();
    for r in state.reports.values().filter(|r| r.phase != Phase::Deleted) {
        keep.extend(r.commit.as_ref().map(|c| c.storage_key));
        keep.extend(r.comments.iter().copied());
    }
    keep
}
