use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::SpeechRecord;
use crate::factors::FactorVector;
use crate::feature::{load_bundle, serialize_bundle, validate, BundleError, FeatureBundle, SpeechMeta};

pub const INDEX_SCHEMA_VERSION: u32 = 1;
const INDEX_FILE: &str = "index.json";
const LOCK_FILE: &str = ".lock";
const BUNDLE_FILE: &str = "bundle.json";
const FACTORS_FILE: &str = "factors.json";
const SENTENCE_FACTORS_FILE: &str = "sentences.factors.json";
/// Cached factor files written by a different engine build are recomputed.
const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
const MAX_ID_LEN: usize = 128;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("speech `{0}` already exists (use force to replace it)")]
    DuplicateId(String),
    #[error("speech `{0}` not found")]
    NotFound(String),
    #[error("invalid speech id `{0}`: use 1 to 128 characters from A-Z, a-z, 0-9, `.`, `_`, `-`")]
    InvalidId(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("storage error at {}: {message}", path.display())]
    Storage { path: PathBuf, message: String },
}

fn storage(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Storage {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Checks that an id is usable as a directory name on every platform.
pub fn validate_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= MAX_ID_LEN
        && id != "."
        && id != ".."
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

/// Lowercase hex SHA-256 of the canonical bundle serialization.
pub fn content_hash(canonical: &[u8]) -> String {
    hex::encode(Sha256::digest(canonical))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub id: String,
    pub meta: SpeechMeta,
    /// Paths relative to the corpus root.
    pub bundle_path: String,
    pub factors_path: String,
    pub sentence_factors_path: String,
    pub content_hash: String,
    /// Seconds since the Unix epoch.
    pub ingested_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusIndex {
    pub schema_version: u32,
    /// Sorted by id.
    pub speeches: Vec<IndexEntry>,
}

impl CorpusIndex {
    fn empty() -> Self {
        CorpusIndex {
            schema_version: INDEX_SCHEMA_VERSION,
            speeches: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorCache<T> {
    engine_version: String,
    content_hash: String,
    factors: T,
}

/// Immutable point-in-time view of the corpus, sorted by id.
#[derive(Debug, Clone, Default)]
pub struct CorpusSnapshot {
    entries: Vec<IndexEntry>,
    records: Vec<Arc<SpeechRecord>>,
}

impl CorpusSnapshot {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn records(&self) -> &[Arc<SpeechRecord>] {
        &self.records
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.entries.binary_search_by(|e| e.id.as_str().cmp(id)).ok()
    }

    pub fn get(&self, id: &str) -> Option<&Arc<SpeechRecord>> {
        self.position(id).map(|i| &self.records[i])
    }

    pub fn entry(&self, id: &str) -> Option<&IndexEntry> {
        self.position(id).map(|i| &self.entries[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub id: String,
    /// Whether an existing speech with the same id was overwritten.
    pub replaced: bool,
}

struct Cached {
    index_digest: String,
    snapshot: Arc<CorpusSnapshot>,
}

/// Directory-of-files corpus: `index.json` plus one directory per speech.
///
/// Writers serialize through an advisory lock on `.lock`; every file is
/// written to a temporary name and renamed into place, and the index is
/// renamed last, so an interrupted ingest leaves the index untouched.
pub struct CorpusStore {
    root: PathBuf,
    cache: Mutex<Option<Cached>>,
    #[cfg(test)]
    fail_before_rename: Mutex<Option<usize>>,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl CorpusStore {
    /// Opens the store at `root`, creating an empty one when absent.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| storage(&root, e))?;
        let store = CorpusStore {
            root,
            cache: Mutex::new(None),
            #[cfg(test)]
            fail_before_rename: Mutex::new(None),
        };
        if !store.index_path().exists() {
            let _lock = store.lock()?;
            if !store.index_path().exists() {
                store.write_index(&CorpusIndex::empty())?;
            }
        }
        store.read_index()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join(INDEX_FILE)
    }

    fn lock(&self) -> Result<File, StoreError> {
        let path = self.root.join(LOCK_FILE);
        let f = File::create(&path).map_err(|e| storage(&path, e))?;
        f.lock().map_err(|e| storage(&path, e))?;
        Ok(f)
    }

    fn read_index_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let path = self.index_path();
        fs::read(&path).map_err(|e| storage(&path, e))
    }

    fn parse_index(&self, bytes: &[u8]) -> Result<CorpusIndex, StoreError> {
        let path = self.index_path();
        let index: CorpusIndex = serde_json::from_slice(bytes).map_err(|e| storage(&path, e))?;
        if index.schema_version != INDEX_SCHEMA_VERSION {
            return Err(storage(&path, format!("unsupported index schema_version {}", index.schema_version)));
        }
        if index.speeches.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(storage(&path, "speech ids are not unique and sorted"));
        }
        Ok(index)
    }

    pub fn read_index(&self) -> Result<CorpusIndex, StoreError> {
        self.parse_index(&self.read_index_bytes()?)
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
        let n = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = path.with_file_name(format!(".{name}.{}.{n}.tmp", std::process::id()));
        let write = || -> std::io::Result<()> {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()
        };
        write().map_err(|e| storage(&tmp, e))?;
        #[cfg(test)]
        {
            let mut fp = self.fail_before_rename.lock().unwrap();
            if let Some(k) = fp.as_mut() {
                if *k == 0 {
                    *fp = None;
                    return Err(storage(path, "injected fault before rename"));
                }
                *k -= 1;
            }
        }
        fs::rename(&tmp, path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            storage(path, e)
        })
    }

    fn write_index(&self, index: &CorpusIndex) -> Result<(), StoreError> {
        let mut bytes = serde_json::to_vec_pretty(index).expect("index serialization is infallible");
        bytes.push(b'\n');
        self.write_atomic(&self.index_path(), &bytes)
    }

    fn write_caches(&self, entry: &IndexEntry, record: &SpeechRecord) -> Result<(), StoreError> {
        let factors = FactorCache {
            engine_version: ENGINE_VERSION.to_string(),
            content_hash: entry.content_hash.clone(),
            factors: &record.factors,
        };
        let sentences = FactorCache {
            engine_version: ENGINE_VERSION.to_string(),
            content_hash: entry.content_hash.clone(),
            factors: &record.sentence_factors,
        };
        let factors = serde_json::to_vec(&factors).expect("factor serialization is infallible");
        let sentences = serde_json::to_vec(&sentences).expect("factor serialization is infallible");
        self.write_atomic(&self.root.join(&entry.factors_path), &factors)?;
        self.write_atomic(&self.root.join(&entry.sentence_factors_path), &sentences)
    }

    /// Stores a bundle and its derived factors, then commits the index.
    pub fn ingest(&self, bundle: FeatureBundle, force: bool) -> Result<IngestOutcome, StoreError> {
        let id = bundle.id().to_string();
        validate_id(&id)?;
        validate(&bundle)?;
        let _lock = self.lock()?;
        let before = self.read_index_bytes()?;
        let mut index = self.parse_index(&before)?;
        let slot = index.speeches.binary_search_by(|e| e.id.cmp(&id));
        if slot.is_ok() && !force {
            return Err(StoreError::DuplicateId(id));
        }

        let canonical = serialize_bundle(&bundle);
        let entry = IndexEntry {
            id: id.clone(),
            meta: bundle.meta.clone(),
            bundle_path: format!("{id}/{BUNDLE_FILE}"),
            factors_path: format!("{id}/{FACTORS_FILE}"),
            sentence_factors_path: format!("{id}/{SENTENCE_FACTORS_FILE}"),
            content_hash: content_hash(&canonical),
            ingested_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        let record = SpeechRecord::from_bundle(bundle);

        let dir = self.root.join(&id);
        fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
        self.write_atomic(&self.root.join(&entry.bundle_path), &canonical)?;
        self.write_caches(&entry, &record)?;

        let replaced = match slot {
            Ok(i) => {
                index.speeches[i] = entry.clone();
                true
            }
            Err(i) => {
                index.speeches.insert(i, entry.clone());
                false
            }
        };
        self.write_index(&index)?;

        // extend the cached snapshot when it reflects the index we replaced
        let after = self.read_index_bytes()?;
        let mut cache = self.cache.lock().unwrap();
        if let Some(c) = cache.as_ref().filter(|c| c.index_digest == content_hash(&before)) {
            let mut snap = (*c.snapshot).clone();
            match snap.position(&id) {
                Some(i) => {
                    snap.entries[i] = entry;
                    snap.records[i] = Arc::new(record);
                }
                None => {
                    let i = snap.entries.partition_point(|e| e.id < id);
                    snap.entries.insert(i, entry);
                    snap.records.insert(i, Arc::new(record));
                }
            }
            *cache = Some(Cached {
                index_digest: content_hash(&after),
                snapshot: Arc::new(snap),
            });
        } else {
            *cache = None;
        }
        Ok(IngestOutcome { id, replaced })
    }

    /// Current corpus. Speeches unchanged since the previous snapshot are
    /// shared; new or changed ones are loaded and verified against their
    /// content hash. Stale factor caches are recomputed and rewritten.
    pub fn snapshot(&self) -> Result<Arc<CorpusSnapshot>, StoreError> {
        let bytes = self.read_index_bytes()?;
        let digest = content_hash(&bytes);
        let mut cache = self.cache.lock().unwrap();
        if let Some(c) = cache.as_ref().filter(|c| c.index_digest == digest) {
            return Ok(c.snapshot.clone());
        }
        let index = self.parse_index(&bytes)?;
        let previous = cache.as_ref().map(|c| c.snapshot.clone());
        let records = index
            .speeches
            .par_iter()
            .map(|e| {
                let reuse = previous.as_ref().and_then(|p| {
                    let i = p.position(&e.id)?;
                    (p.entries[i].content_hash == e.content_hash).then(|| p.records[i].clone())
                });
                match reuse {
                    Some(r) => Ok(r),
                    None => self.load_record(e).map(Arc::new),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let snapshot = Arc::new(CorpusSnapshot {
            entries: index.speeches,
            records,
        });
        *cache = Some(Cached {
            index_digest: digest,
            snapshot: snapshot.clone(),
        });
        Ok(snapshot)
    }

    fn read_cache<T: for<'de> Deserialize<'de>>(&self, rel: &str, hash: &str) -> Option<T> {
        let bytes = fs::read(self.root.join(rel)).ok()?;
        let c: FactorCache<T> = serde_json::from_slice(&bytes).ok()?;
        (c.engine_version == ENGINE_VERSION && c.content_hash == hash).then_some(c.factors)
    }

    fn load_record(&self, entry: &IndexEntry) -> Result<SpeechRecord, StoreError> {
        let path = self.root.join(&entry.bundle_path);
        let bytes = fs::read(&path).map_err(|e| storage(&path, e))?;
        if content_hash(&bytes) != entry.content_hash {
            return Err(storage(&path, format!("content hash mismatch for speech `{}`", entry.id)));
        }
        let bundle = Arc::new(load_bundle(&bytes)?);
        let factors: Option<FactorVector> = self.read_cache(&entry.factors_path, &entry.content_hash);
        let sentences: Option<Vec<FactorVector>> = self
            .read_cache(&entry.sentence_factors_path, &entry.content_hash)
            .filter(|s: &Vec<FactorVector>| s.len() == bundle.script.sentences.len());
        match (factors, sentences) {
            (Some(factors), Some(sentence_factors)) => Ok(SpeechRecord {
                bundle,
                factors,
                sentence_factors,
            }),
            _ => {
                let record = SpeechRecord::from_bundle(bundle);
                // best effort: a read-only corpus still loads
                let _ = self.write_caches(entry, &record);
                Ok(record)
            }
        }
    }

    /// Canonical bytes of a stored bundle, verified against the index.
    pub fn bundle_bytes(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        let index = self.read_index()?;
        let entry = index
            .speeches
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        let path = self.root.join(&entry.bundle_path);
        let bytes = fs::read(&path).map_err(|e| storage(&path, e))?;
        if content_hash(&bytes) != entry.content_hash {
            return Err(storage(&path, format!("content hash mismatch for speech `{id}`")));
        }
        Ok(bytes)
    }
}
