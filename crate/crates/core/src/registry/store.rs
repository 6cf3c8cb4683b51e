//! In-memory directory backed by an append-only record log.
//!
//! Log record layout (all integers big-endian):
//!
//! ```text
//! op:u8 | uuid:[u8;16] | class:u8 | has_channel:u8 | channel:u8 | version:u64
//!       | stored_at_ms:u64 | len:u32 | payload:[u8;len] | crc32:u32
//! ```
//!
//! The CRC covers every preceding octet of the record. Replay applies
//! records in order (last write wins) and truncates a torn tail.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use bytes::Bytes;
use parking_lot::{Mutex, RwLock};
use thiserror::Error;
use uuid::Uuid;

use super::key::{ClassKey, DirectoryKey};
use crate::teds::{decode_teds, TedsError};

const OP_PUT: u8 = 1;
const OP_DEL: u8 = 2;
const HEADER_LEN: usize = 1 + 16 + 3 + 8 + 8 + 4;
const MAX_PAYLOAD: usize = 16 * 1024 * 1024;
/// Compaction runs once this many superseded records have accumulated and
/// they outnumber the live entries.
const COMPACT_MIN_DEAD: usize = 64;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("binary rejected: {0}")]
    InvalidBinary(String),
    #[error("no entry for {0}")]
    NotFound(DirectoryKey),
    #[error("storage failure: {0}")]
    Storage(#[from] io::Error),
}

impl From<TedsError> for StoreError {
    fn from(e: TedsError) -> Self {
        StoreError::InvalidBinary(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct DirectoryEntry {
    pub key: DirectoryKey,
    pub binary: Bytes,
    pub version: u64,
    pub stored_at: SystemTime,
}

struct LogFile {
    path: PathBuf,
    out: BufWriter<File>,
    records: usize,
}

impl LogFile {
    fn append(&mut self, record: &[u8]) -> io::Result<()> {
        self.out.write_all(record)?;
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        self.records += 1;
        Ok(())
    }
}

pub struct Directory {
    entries: RwLock<HashMap<DirectoryKey, Arc<DirectoryEntry>>>,
    served: Mutex<HashMap<DirectoryKey, u64>>,
    /// Also serializes all writers.
    log: Mutex<Option<LogFile>>,
}

impl Directory {
    /// A directory that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            served: Mutex::new(HashMap::new()),
            log: Mutex::new(None),
        }
    }

    /// Opens (or creates) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut entries = HashMap::new();
        let mut records = 0;
        if path.exists() {
            let mut raw = Vec::new();
            File::open(&path)?.read_to_end(&mut raw)?;
            let (valid_len, n) = replay(&raw, &mut entries);
            records = n;
            if valid_len < raw.len() {
                tracing::warn!(
                    path = %path.display(),
                    dropped = raw.len() - valid_len,
                    "truncating torn tail of registry log"
                );
                let f = OpenOptions::new().write(true).open(&path)?;
                f.set_len(valid_len as u64)?;
                f.sync_all()?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let dir = Self {
            entries: RwLock::new(entries),
            served: Mutex::new(HashMap::new()),
            log: Mutex::new(Some(LogFile {
                path,
                out: BufWriter::new(file),
                records,
            })),
        };
        Ok(dir)
    }

    /// Stores `binary` under `key` once it has been durably logged. Returns the
    /// new version: previous + 1, or 1 for a fresh key.
    pub fn put(&self, key: DirectoryKey, binary: Bytes) -> Result<u64, StoreError> {
        let record = decode_teds(&binary)?;
        if !key.class_key.matches(&record) {
            return Err(StoreError::InvalidBinary(format!(
                "binary holds {} TEDS, which does not belong under class key {}",
                record.class(),
                key.class_key
            )));
        }
        if let crate::teds::TedsRecord::Meta(meta) = &record {
            if meta.uuid != key.uuid {
                return Err(StoreError::InvalidBinary(
                    "meta TEDS names a different uuid than the key".into(),
                ));
            }
        }
        let mut log = self.log.lock();
        let version = self.entries.read().get(&key).map_or(1, |e| e.version + 1);
        let stored_at = SystemTime::now();
        if let Some(log) = log.as_mut() {
            log.append(&encode_record(OP_PUT, &key, version, stored_at, &binary))?;
        }
        self.entries.write().insert(
            key,
            Arc::new(DirectoryEntry {
                key,
                binary,
                version,
                stored_at,
            }),
        );
        self.maybe_compact(&mut log)?;
        Ok(version)
    }

    /// Returns the last stored entry and counts the query as served.
    pub fn get(&self, key: &DirectoryKey) -> Option<Arc<DirectoryEntry>> {
        let entry = self.entries.read().get(key).cloned()?;
        *self.served.lock().entry(*key).or_default() += 1;
        Some(entry)
    }

    /// Looks an entry up without counting it.
    pub fn peek(&self, key: &DirectoryKey) -> Option<Arc<DirectoryEntry>> {
        self.entries.read().get(key).cloned()
    }

    pub fn list(&self, uuid: &Uuid) -> BTreeSet<ClassKey> {
        self.entries
            .read()
            .keys()
            .filter(|k| k.uuid == *uuid)
            .map(|k| k.class_key)
            .collect()
    }

    pub fn delete(&self, key: &DirectoryKey) -> Result<(), StoreError> {
        let mut log = self.log.lock();
        if !self.entries.read().contains_key(key) {
            return Err(StoreError::NotFound(*key));
        }
        if let Some(log) = log.as_mut() {
            log.append(&encode_record(OP_DEL, key, 0, SystemTime::now(), &[]))?;
        }
        self.entries.write().remove(key);
        self.maybe_compact(&mut log)?;
        Ok(())
    }

    /// GETs served for any key of `uuid`.
    pub fn served_for_uuid(&self, uuid: &Uuid) -> u64 {
        self.served
            .lock()
            .iter()
            .filter(|(k, _)| k.uuid == *uuid)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn served_for_key(&self, key: &DirectoryKey) -> u64 {
        self.served.lock().get(key).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rewrites the log so it holds exactly one record per live entry.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut log = self.log.lock();
        self.compact_locked(&mut log)
    }

    fn maybe_compact(&self, log: &mut Option<LogFile>) -> Result<(), StoreError> {
        let Some(file) = log.as_ref() else {
            return Ok(());
        };
        let live = self.entries.read().len();
        let dead = file.records.saturating_sub(live);
        if dead >= COMPACT_MIN_DEAD && dead > live {
            self.compact_locked(log)?;
        }
        Ok(())
    }

    fn compact_locked(&self, log: &mut Option<LogFile>) -> Result<(), StoreError> {
        let Some(file) = log.as_mut() else {
            return Ok(());
        };
        let tmp = file.path.with_extension("compact");
        let entries: Vec<_> = self.entries.read().values().cloned().collect();
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            for e in &entries {
                out.write_all(&encode_record(
                    OP_PUT,
                    &e.key,
                    e.version,
                    e.stored_at,
                    &e.binary,
                ))?;
            }
            out.flush()?;
            out.get_ref().sync_all()?;
        }
        fs::rename(&tmp, &file.path)?;
        if let Some(parent) = file.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            // directory fsync makes the rename itself durable
            if let Ok(d) = File::open(parent) {
                let _ = d.sync_all();
            }
        }
        let reopened = OpenOptions::new().append(true).open(&file.path)?;
        file.out = BufWriter::new(reopened);
        file.records = entries.len();
        Ok(())
    }
}

fn millis(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).unwrap_or_default().as_millis() as u64
}

fn encode_record(
    op: u8,
    key: &DirectoryKey,
    version: u64,
    at: SystemTime,
    payload: &[u8],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.push(op);
    out.extend_from_slice(key.uuid.as_bytes());
    out.push(key.class_key.class_code);
    out.push(u8::from(key.class_key.channel.is_some()));
    out.push(key.class_key.channel.unwrap_or(0));
    out.extend_from_slice(&version.to_be_bytes());
    out.extend_from_slice(&millis(at).to_be_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    out
}

/// Applies every intact record; returns the length of the intact prefix and
/// the number of records in it.
fn replay(raw: &[u8], entries: &mut HashMap<DirectoryKey, Arc<DirectoryEntry>>) -> (usize, usize) {
    let mut pos = 0;
    let mut count = 0;
    while let Some((next, op, key, version, at, payload)) = read_record(raw, pos) {
        match op {
            OP_PUT => {
                entries.insert(
                    key,
                    Arc::new(DirectoryEntry {
                        key,
                        binary: Bytes::copy_from_slice(payload),
                        version,
                        stored_at: at,
                    }),
                );
            }
            _ => {
                entries.remove(&key);
            }
        }
        pos = next;
        count += 1;
    }
    (pos, count)
}

type Record<'a> = (usize, u8, DirectoryKey, u64, SystemTime, &'a [u8]);

fn read_record(raw: &[u8], pos: usize) -> Option<Record<'_>> {
    let header = raw.get(pos..pos + HEADER_LEN)?;
    let op = header[0];
    if op != OP_PUT && op != OP_DEL {
        return None;
    }
    let len = u32::from_be_bytes(header[36..40].try_into().ok()?) as usize;
    if len > MAX_PAYLOAD {
        return None;
    }
    let body_end = pos + HEADER_LEN + len;
    let crc_bytes = raw.get(body_end..body_end + 4)?;
    let crc = u32::from_be_bytes(crc_bytes.try_into().ok()?);
    if crc32fast::hash(&raw[pos..body_end]) != crc {
        return None;
    }
    let uuid = Uuid::from_bytes(header[1..17].try_into().ok()?);
    let class_key = ClassKey {
        class_code: header[17],
        channel: (header[18] != 0).then_some(header[19]),
    };
    let version = u64::from_be_bytes(header[20..28].try_into().ok()?);
    let at =
        UNIX_EPOCH + Duration::from_millis(u64::from_be_bytes(header[28..36].try_into().ok()?));
    Some((
        body_end + 4,
        op,
        DirectoryKey::new(uuid, class_key),
        version,
        at,
        &raw[pos + HEADER_LEN..body_end],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teds::{encode_teds, MetaTeds, PhyTeds, TedsClass, TedsRecord};

    fn uuid() -> Uuid {
        Uuid::from_u128(0xfeed)
    }

    fn meta_key() -> DirectoryKey {
        DirectoryKey::new(uuid(), ClassKey::for_class(TedsClass::Meta))
    }

    fn meta_binary(response_time_ms: u32) -> Bytes {
        encode_teds(&TedsRecord::Meta(MetaTeds {
            uuid: uuid(),
            channel_count: 1,
            response_time_ms,
            extensions: vec![],
        }))
        .unwrap()
        .into()
    }

    fn phy_binary() -> Bytes {
        encode_teds(&TedsRecord::Phy(PhyTeds {
            max_payload_octets: 64,
            ..Default::default()
        }))
        .unwrap()
        .into()
    }

    #[test]
    fn versions_and_overwrite() {
        let dir = Directory::in_memory();
        assert_eq!(dir.put(meta_key(), meta_binary(100)).unwrap(), 1);
        assert_eq!(dir.put(meta_key(), meta_binary(200)).unwrap(), 2);
        assert_eq!(dir.get(&meta_key()).unwrap().binary, meta_binary(200));
    }

    #[test]
    fn corrupt_binary_not_stored() {
        let dir = Directory::in_memory();
        let mut bad = meta_binary(100).to_vec();
        bad[10] ^= 1;
        assert!(matches!(
            dir.put(meta_key(), bad.into()),
            Err(StoreError::InvalidBinary(_))
        ));
        assert!(dir.is_empty());
    }

    #[test]
    fn class_key_must_match_binary() {
        let dir = Directory::in_memory();
        assert!(matches!(
            dir.put(meta_key(), phy_binary()),
            Err(StoreError::InvalidBinary(_))
        ));
        let other = DirectoryKey::new(Uuid::from_u128(1), ClassKey::for_class(TedsClass::Meta));
        assert!(matches!(
            dir.put(other, meta_binary(1)),
            Err(StoreError::InvalidBinary(_))
        ));
    }

    #[test]
    fn get_counts_and_list() {
        let dir = Directory::in_memory();
        assert!(dir.get(&meta_key()).is_none());
        dir.put(meta_key(), meta_binary(100)).unwrap();
        let phy = DirectoryKey::new(uuid(), ClassKey::for_class(TedsClass::Phy));
        dir.put(phy, phy_binary()).unwrap();
        for _ in 0..100 {
            dir.get(&meta_key()).unwrap();
        }
        dir.get(&phy).unwrap();
        assert_eq!(dir.served_for_key(&meta_key()), 100);
        assert_eq!(dir.served_for_uuid(&uuid()), 101);
        assert_eq!(
            dir.list(&uuid())
                .into_iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>(),
            vec!["01", "0D"]
        );
        assert!(dir.list(&Uuid::from_u128(3)).is_empty());
    }

    #[test]
    fn delete_semantics() {
        let dir = Directory::in_memory();
        dir.put(meta_key(), meta_binary(100)).unwrap();
        dir.put(meta_key(), meta_binary(100)).unwrap();
        dir.delete(&meta_key()).unwrap();
        assert!(dir.get(&meta_key()).is_none());
        assert!(matches!(
            dir.delete(&meta_key()),
            Err(StoreError::NotFound(_))
        ));
        assert_eq!(dir.put(meta_key(), meta_binary(100)).unwrap(), 1);
    }

    #[test]
    fn survives_reopen() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("registry.log");
        {
            let dir = Directory::open(&path).unwrap();
            dir.put(meta_key(), meta_binary(1)).unwrap();
            dir.put(meta_key(), meta_binary(2)).unwrap();
            let phy = DirectoryKey::new(uuid(), ClassKey::for_class(TedsClass::Phy));
            dir.put(phy, phy_binary()).unwrap();
            dir.delete(&phy).unwrap();
        }
        let dir = Directory::open(&path).unwrap();
        let e = dir.get(&meta_key()).unwrap();
        assert_eq!(e.binary, meta_binary(2));
        assert_eq!(e.version, 2);
        assert_eq!(dir.len(), 1);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("registry.log");
        {
            let dir = Directory::open(&path).unwrap();
            dir.put(meta_key(), meta_binary(1)).unwrap();
            dir.put(meta_key(), meta_binary(2)).unwrap();
        }
        let full = fs::metadata(&path).unwrap().len();
        let f = OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(full - 3).unwrap();
        drop(f);
        let dir = Directory::open(&path).unwrap();
        assert_eq!(dir.get(&meta_key()).unwrap().binary, meta_binary(1));
        // the next write lands after the intact prefix
        assert_eq!(dir.put(meta_key(), meta_binary(3)).unwrap(), 2);
        drop(dir);
        let dir = Directory::open(&path).unwrap();
        assert_eq!(dir.get(&meta_key()).unwrap().binary, meta_binary(3));
    }

    #[test]
    fn compaction_keeps_live_entries() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("registry.log");
        let dir = Directory::open(&path).unwrap();
        for i in 0..200 {
            dir.put(meta_key(), meta_binary(i + 1)).unwrap();
        }
        let size = fs::metadata(&path).unwrap().len() as usize;
        let one = encode_record(OP_PUT, &meta_key(), 1, SystemTime::now(), &meta_binary(1)).len();
        assert!(
            size < one * (COMPACT_MIN_DEAD + 2),
            "log was not compacted: {size}"
        );
        drop(dir);
        let dir = Directory::open(&path).unwrap();
        let e = dir.get(&meta_key()).unwrap();
        assert_eq!((e.version, e.binary.clone()), (200, meta_binary(200)));
    }

    #[test]
    fn concurrent_gets_are_exact() {
        let dir = Arc::new(Directory::in_memory());
        dir.put(meta_key(), meta_binary(1)).unwrap();
        let threads: Vec<_> = (0..8)
            .map(|_| {
                let dir = dir.clone();
                std::thread::spawn(move || {
                    for _ in 0..500 {
                        dir.get(&meta_key()).unwrap();
                    }
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        assert_eq!(dir.served_for_key(&meta_key()), 4000);
    }
}
