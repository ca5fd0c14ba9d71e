//! Stage-level code cache.
//!
//! Code for stage `j` of a configuration is keyed by the dataset fingerprint,
//! the insights of that configuration whose stage is at most `j`, and `j`
//! itself. Entries are write-once so replays stay bit-identical.
//!
//! On disk each entry lives at `<dir>/<fingerprint>/<prefix-hash>/<stage>.json`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::insight::{Insight, InsightId};
use crate::stage::Stage;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cache directory {0} is locked by another process")]
    Locked(PathBuf),
    #[error("corrupt cache entry {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("refusing to cache empty code for stage {0}")]
    EmptyCode(Stage),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct CacheKey {
    fingerprint: String,
    prefix: Vec<InsightId>,
    stage: Stage,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub fingerprint: String,
    pub prefix: Vec<InsightId>,
    pub stage: Stage,
    pub code: String,
    pub instruction: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl CacheEntry {
    fn key(&self) -> CacheKey {
        CacheKey {
            fingerprint: self.fingerprint.clone(),
            prefix: self.prefix.clone(),
            stage: self.stage,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub stores: usize,
    pub duplicate_stores: usize,
}

/// Ids of the insights in `insights` whose stage is at most `stage`.
pub(crate) fn stage_prefix(insights: &[Insight], stage: Stage) -> Vec<InsightId> {
    insights.iter().filter(|i| i.stage <= stage).map(|i| i.id.clone()).collect()
}

fn prefix_hash(prefix: &[InsightId]) -> String {
    let mut h = Sha256::new();
    for id in prefix {
        h.update(id.as_str().as_bytes());
        h.update(b"/");
    }
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Default)]
pub struct StageCache {
    entries: BTreeMap<CacheKey, CacheEntry>,
    dir: Option<PathBuf>,
    _lock: Option<File>,
    stats: CacheStats,
}

impl StageCache {
    pub fn in_memory() -> Self {
        StageCache::default()
    }

    /// Opens (creating if needed) a directory-backed cache and takes an
    /// advisory lock on it for the lifetime of the value.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, CacheError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let lock_path = dir.join(".lock");
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(io_err(&lock_path))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(CacheError::Locked(dir)),
            Err(fs::TryLockError::Error(e)) => return Err(io_err(&lock_path)(e)),
        }
        let mut cache = StageCache { dir: Some(dir.clone()), _lock: Some(lock), ..Default::default() };
        for entry in load_dir(&dir)? {
            cache.entries.insert(entry.key(), entry);
        }
        Ok(cache)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.values()
    }

    /// Entries stored under the longest prefix of `prefix` that has any entry,
    /// ordered by stage. Empty when no prefix is stored.
    pub fn lookup(&self, fingerprint: &str, prefix: &[InsightId]) -> Vec<CacheEntry> {
        (0..=prefix.len())
            .rev()
            .map(|n| {
                self.entries
                    .values()
                    .filter(|e| e.fingerprint == fingerprint && e.prefix == prefix[..n])
                    .cloned()
                    .collect::<Vec<_>>()
            })
            .find(|found| !found.is_empty())
            .unwrap_or_default()
    }

    /// Cached entries for stages `1..=j` of a configuration, for the largest
    /// `j` such that every one of those stages is cached.
    pub fn replay_plan(&self, fingerprint: &str, insights: &[Insight]) -> Vec<CacheEntry> {
        Stage::ALL
            .iter()
            .map_while(|&stage| {
                let key = CacheKey {
                    fingerprint: fingerprint.to_string(),
                    prefix: stage_prefix(insights, stage),
                    stage,
                };
                self.entries.get(&key).cloned()
            })
            .collect()
    }

    /// Stores `code`; a second store under an existing key keeps the first
    /// code and returns `false`.
    pub fn store(
        &mut self,
        fingerprint: &str,
        prefix: &[InsightId],
        stage: Stage,
        code: &str,
        instruction: &str,
    ) -> Result<bool, CacheError> {
        if code.is_empty() {
            return Err(CacheError::EmptyCode(stage));
        }
        let entry = CacheEntry {
            fingerprint: fingerprint.to_string(),
            prefix: prefix.to_vec(),
            stage,
            code: code.to_string(),
            instruction: instruction.to_string(),
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        let key = entry.key();
        if self.entries.contains_key(&key) {
            self.stats.duplicate_stores += 1;
            return Ok(false);
        }
        if let Some(dir) = &self.dir {
            let path = entry_path(dir, &entry);
            if let Some(existing) = write_new(&path, &entry)? {
                // another writer got there first
                self.entries.insert(key, existing);
                self.stats.duplicate_stores += 1;
                return Ok(false);
            }
        }
        self.entries.insert(key, entry);
        self.stats.stores += 1;
        Ok(true)
    }

    /// Removes every entry, on disk as well.
    pub fn clear(&mut self) -> Result<usize, CacheError> {
        let n = self.entries.len();
        self.entries.clear();
        if let Some(dir) = &self.dir {
            for item in fs::read_dir(dir).map_err(io_err(dir))? {
                let path = item.map_err(io_err(dir))?.path();
                if path.is_dir() {
                    fs::remove_dir_all(&path).map_err(io_err(&path))?;
                }
            }
        }
        Ok(n)
    }

    /// Entry count per dataset fingerprint.
    pub fn summary(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in self.entries.values() {
            *out.entry(e.fingerprint.clone()).or_insert(0) += 1;
        }
        out
    }
}

fn entry_path(dir: &Path, entry: &CacheEntry) -> PathBuf {
    dir.join(&entry.fingerprint)
        .join(prefix_hash(&entry.prefix))
        .join(format!("{}.json", entry.stage.slug()))
}

/// Writes `entry` unless the file exists, in which case the existing entry is returned.
fn write_new(path: &Path, entry: &CacheEntry) -> Result<Option<CacheEntry>, CacheError> {
    let parent = path.parent().expect("entry paths have parents");
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    match OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(mut f) => {
            let body = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
            f.write_all(&body).map_err(io_err(path))?;
            Ok(None)
        }
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => read_entry(path).map(Some),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn read_entry(path: &Path) -> Result<CacheEntry, CacheError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CacheError::Corrupt { path: path.to_path_buf(), reason: e.to_string() })
}

fn load_dir(dir: &Path) -> Result<Vec<CacheEntry>, CacheError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for item in fs::read_dir(&d).map_err(io_err(&d))? {
            let path = item.map_err(io_err(&d))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|x| x == "json") {
                out.push(read_entry(&path)?);
            }
        }
    }
    Ok(out)
}
