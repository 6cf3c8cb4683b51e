//! NCAP-local TEDS cache. Entries live in memory and, when a directory is
//! configured, on disk as `<dir>/<uuid>/<class-key>.teds` plus an `index`
//! file listing `<uuid> <fetched-at-ms> <key>,<key>,...` per line.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use bytes::Bytes;
use parking_lot::{Mutex, RwLock};
use serde::Serialize;
use uuid::Uuid;

use super::NcapError;
use crate::ident::{parse_uuid_hex, uuid_hex};
use crate::registry::ClassKey;
use crate::teds::{
    decode_teds, validate_teds_set, MetaTeds, PhyTeds, TedsClass, TedsRecord,
    TransducerChannelTeds, UserTransducerNameTeds,
};

/// The typed TEDS of one TIM.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodedTeds {
    pub meta: MetaTeds,
    pub channels: Vec<TransducerChannelTeds>,
    pub name: UserTransducerNameTeds,
    pub phy: PhyTeds,
}

impl DecodedTeds {
    /// Decodes and cross-validates a complete set of binaries for `uuid`.
    pub fn from_binaries(
        uuid: Uuid,
        binaries: &BTreeMap<ClassKey, Bytes>,
    ) -> Result<Self, NcapError> {
        let invalid = |msg: String| NcapError::InvalidTeds { uuid, reason: msg };
        let (mut meta, mut name, mut phy) = (None, None, None);
        let mut channels = Vec::new();
        for (key, bin) in binaries {
            let record = decode_teds(bin).map_err(|e| invalid(format!("{key}: {e}")))?;
            if !key.matches(&record) {
                return Err(invalid(format!(
                    "{key}: stored record is {}",
                    ClassKey::for_record(&record)
                )));
            }
            match record {
                TedsRecord::Meta(m) => meta = Some(m),
                TedsRecord::Channel(c) => channels.push(c),
                TedsRecord::UserName(n) => name = Some(n),
                TedsRecord::Phy(p) => phy = Some(p),
            }
        }
        let missing = |class: TedsClass| invalid(format!("no {} TEDS", class.name()));
        let meta = meta.ok_or_else(|| missing(TedsClass::Meta))?;
        let name = name.ok_or_else(|| missing(TedsClass::UserTransducerName))?;
        let phy = phy.ok_or_else(|| missing(TedsClass::Phy))?;
        if meta.uuid != uuid {
            return Err(invalid(format!(
                "meta TEDS names uuid {}",
                uuid_hex(&meta.uuid)
            )));
        }
        let report = validate_teds_set(&meta, &channels, &name, &phy);
        if !report.is_ok() {
            return Err(invalid(report.to_string()));
        }
        channels.sort_by_key(|c| c.channel_id);
        Ok(Self {
            meta,
            channels,
            name,
            phy,
        })
    }

    pub fn channel(&self, channel_id: u8) -> Option<&TransducerChannelTeds> {
        self.channels.iter().find(|c| c.channel_id == channel_id)
    }
}

#[derive(Debug)]
pub struct CacheEntry {
    pub uuid: Uuid,
    pub binaries: BTreeMap<ClassKey, Bytes>,
    pub decoded: DecodedTeds,
    pub fetched_at: SystemTime,
    hit_count: AtomicU64,
    last_used: AtomicU64,
}

impl CacheEntry {
    pub fn hit_count(&self) -> u64 {
        self.hit_count.load(Ordering::Relaxed)
    }

    pub fn fetched_at_ms(&self) -> u64 {
        self.fetched_at
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

pub struct TedsCache {
    dir: Option<PathBuf>,
    max_entries: Option<usize>,
    entries: RwLock<HashMap<Uuid, Arc<CacheEntry>>>,
    clock: AtomicU64,
    // serialises disk mutation and index rewrites
    disk: Mutex<()>,
}

impl TedsCache {
    pub fn in_memory(max_entries: Option<usize>) -> Self {
        Self {
            dir: None,
            max_entries,
            entries: RwLock::default(),
            clock: AtomicU64::new(0),
            disk: Mutex::new(()),
        }
    }

    /// Opens (creating if needed) a cache directory and loads every entry
    /// the index lists. Entries whose files are missing or fail to decode
    /// are dropped.
    pub fn open(dir: impl AsRef<Path>, max_entries: Option<usize>) -> Result<Self, NcapError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| cache_io(&dir, e))?;
        let mut cache = Self::in_memory(max_entries);
        let index = match fs::read_to_string(dir.join("index")) {
            Ok(s) => s,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(cache_io(&dir, e)),
        };
        {
            let mut entries = cache.entries.write();
            for line in index.lines().filter(|l| !l.trim().is_empty()) {
                match load_entry(&dir, line) {
                    Ok(entry) => {
                        entries.insert(entry.uuid, Arc::new(entry));
                    }
                    Err(reason) => tracing::warn!(line, %reason, "dropping cache entry"),
                }
            }
        }
        cache.dir = Some(dir);
        Ok(cache)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Looks `uuid` up without counting a hit.
    pub fn peek(&self, uuid: &Uuid) -> Option<Arc<CacheEntry>> {
        self.entries.read().get(uuid).cloned()
    }

    /// Counts a hit on `entry` and marks it recently used.
    pub fn touch(&self, entry: &CacheEntry) {
        entry.hit_count.fetch_add(1, Ordering::Relaxed);
        entry.last_used.store(
            self.clock.fetch_add(1, Ordering::Relaxed),
            Ordering::Relaxed,
        );
    }

    /// Stores a validated entry (hit count 1) and persists it. Evicts the
    /// least recently used entries beyond the configured cap.
    pub fn insert(
        &self,
        uuid: Uuid,
        binaries: BTreeMap<ClassKey, Bytes>,
        decoded: DecodedTeds,
    ) -> Result<Arc<CacheEntry>, NcapError> {
        let entry = Arc::new(CacheEntry {
            uuid,
            binaries,
            decoded,
            fetched_at: SystemTime::now(),
            hit_count: AtomicU64::new(1),
            last_used: AtomicU64::new(self.clock.fetch_add(1, Ordering::Relaxed)),
        });
        let _disk = self.disk.lock();
        if let Some(dir) = &self.dir {
            write_entry(dir, &entry).map_err(|e| cache_io(dir, e))?;
        }
        let evicted = {
            let mut entries = self.entries.write();
            entries.insert(uuid, entry.clone());
            let mut evicted = Vec::new();
            if let Some(max) = self.max_entries {
                while entries.len() > max.max(1) {
                    let victim = entries
                        .values()
                        .filter(|e| e.uuid != uuid)
                        .min_by_key(|e| e.last_used.load(Ordering::Relaxed))
                        .map(|e| e.uuid);
                    match victim {
                        Some(v) => {
                            entries.remove(&v);
                            evicted.push(v);
                        }
                        None => break,
                    }
                }
            }
            evicted
        };
        if let Some(dir) = &self.dir {
            for v in &evicted {
                let _ = fs::remove_dir_all(dir.join(uuid_hex(v)));
            }
            self.write_index(dir).map_err(|e| cache_io(dir, e))?;
        }
        Ok(entry)
    }

    pub fn remove(&self, uuid: &Uuid) -> Result<bool, NcapError> {
        let _disk = self.disk.lock();
        let removed = self.entries.write().remove(uuid).is_some();
        if let (true, Some(dir)) = (removed, &self.dir) {
            self.write_index(dir).map_err(|e| cache_io(dir, e))?;
            let _ = fs::remove_dir_all(dir.join(uuid_hex(uuid)));
        }
        Ok(removed)
    }

    /// Drops every entry, in memory and on disk. Returns how many there were.
    pub fn flush(&self) -> Result<usize, NcapError> {
        let _disk = self.disk.lock();
        let old: Vec<Uuid> = self.entries.write().drain().map(|(k, _)| k).collect();
        if let Some(dir) = &self.dir {
            self.write_index(dir).map_err(|e| cache_io(dir, e))?;
            for uuid in &old {
                let _ = fs::remove_dir_all(dir.join(uuid_hex(uuid)));
            }
        }
        Ok(old.len())
    }

    pub fn entries(&self) -> Vec<Arc<CacheEntry>> {
        let mut all: Vec<_> = self.entries.read().values().cloned().collect();
        all.sort_by_key(|e| e.uuid);
        all
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_index(&self, dir: &Path) -> io::Result<()> {
        let mut out = String::new();
        for e in self.entries() {
            let keys: Vec<String> = e.binaries.keys().map(ClassKey::to_string).collect();
            out.push_str(&format!(
                "{} {} {}\n",
                uuid_hex(&e.uuid),
                e.fetched_at_ms(),
                keys.join(",")
            ));
        }
        write_atomic(&dir.join("index"), out.as_bytes())
    }
}

fn cache_io(dir: &Path, e: io::Error) -> NcapError {
    NcapError::CacheIo(format!("{}: {e}", dir.display()))
}

fn write_atomic(path: &Path, data: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn write_entry(dir: &Path, entry: &CacheEntry) -> io::Result<()> {
    let sub = dir.join(uuid_hex(&entry.uuid));
    fs::create_dir_all(&sub)?;
    for (key, bin) in &entry.binaries {
        write_atomic(&sub.join(format!("{}.teds", key.file_stem())), bin)?;
    }
    Ok(())
}

fn load_entry(dir: &Path, line: &str) -> Result<CacheEntry, String> {
    let mut parts = line.split_whitespace();
    let (Some(uuid), Some(fetched), Some(keys), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err("malformed index line".into());
    };
    let uuid = parse_uuid_hex(uuid).ok_or("bad uuid")?;
    let fetched: u64 = fetched.parse().map_err(|_| "bad timestamp")?;
    let mut binaries = BTreeMap::new();
    for key in keys.split(',') {
        let key: ClassKey = key.parse().map_err(|e: crate::registry::KeyError| e.0)?;
        let path = dir
            .join(uuid_hex(&uuid))
            .join(format!("{}.teds", key.file_stem()));
        let bin = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        binaries.insert(key, Bytes::from(bin));
    }
    let decoded = DecodedTeds::from_binaries(uuid, &binaries).map_err(|e| e.to_string())?;
    Ok(CacheEntry {
        uuid,
        binaries,
        decoded,
        fetched_at: UNIX_EPOCH + Duration::from_millis(fetched),
        hit_count: AtomicU64::new(0),
        last_used: AtomicU64::new(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authoring::generate_teds;
    use crate::fixtures::demo_description;

    fn binaries(uuid: Uuid, channels: u8) -> BTreeMap<ClassKey, Bytes> {
        generate_teds(&demo_description(uuid, channels, 100_000))
            .unwrap()
            .into_iter()
            .map(|g| (g.class_key, Bytes::from(g.binary)))
            .collect()
    }

    fn insert(cache: &TedsCache, n: u128, channels: u8) -> Arc<CacheEntry> {
        let uuid = Uuid::from_u128(n);
        let bins = binaries(uuid, channels);
        let decoded = DecodedTeds::from_binaries(uuid, &bins).unwrap();
        cache.insert(uuid, bins, decoded).unwrap()
    }

    #[test]
    fn decoded_matches_binaries() {
        let uuid = Uuid::from_u128(1);
        let bins = binaries(uuid, 3);
        let d = DecodedTeds::from_binaries(uuid, &bins).unwrap();
        assert_eq!(
            d.channels.iter().map(|c| c.channel_id).collect::<Vec<_>>(),
            [0, 1, 2]
        );
        assert_eq!(d.meta.uuid, uuid);
    }

    #[test]
    fn incomplete_or_foreign_sets_rejected() {
        let uuid = Uuid::from_u128(1);
        let mut bins = binaries(uuid, 2);
        bins.remove(&ClassKey::channel(1));
        assert!(matches!(
            DecodedTeds::from_binaries(uuid, &bins),
            Err(NcapError::InvalidTeds { .. })
        ));
        let bins = binaries(uuid, 1);
        assert!(DecodedTeds::from_binaries(Uuid::from_u128(2), &bins).is_err());
        let mut bins = binaries(uuid, 1);
        let mut corrupt = bins[&ClassKey::channel(0)].to_vec();
        corrupt[9] ^= 0x01;
        bins.insert(ClassKey::channel(0), corrupt.into());
        assert!(DecodedTeds::from_binaries(uuid, &bins).is_err());
    }

    #[test]
    fn hit_counting() {
        let cache = TedsCache::in_memory(None);
        let e = insert(&cache, 1, 1);
        assert_eq!(e.hit_count(), 1);
        cache.touch(&cache.peek(&e.uuid).unwrap());
        assert_eq!(e.hit_count(), 2);
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = TedsCache::open(dir.path(), None).unwrap();
            insert(&cache, 1, 2);
            insert(&cache, 2, 1);
        }
        let cache = TedsCache::open(dir.path(), None).unwrap();
        assert_eq!(cache.len(), 2);
        let e = cache.peek(&Uuid::from_u128(1)).unwrap();
        assert_eq!(e.binaries, binaries(Uuid::from_u128(1), 2));
        assert_eq!(e.decoded.channels.len(), 2);
        assert!(dir
            .path()
            .join(uuid_hex(&e.uuid))
            .join("03_01.teds")
            .exists());
    }

    #[test]
    fn damaged_file_drops_only_that_entry() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = TedsCache::open(dir.path(), None).unwrap();
            insert(&cache, 1, 1);
            insert(&cache, 2, 1);
        }
        let victim = dir
            .path()
            .join(uuid_hex(&Uuid::from_u128(1)))
            .join("0D.teds");
        let mut bin = fs::read(&victim).unwrap();
        bin[10] ^= 0xFF;
        fs::write(&victim, bin).unwrap();
        let cache = TedsCache::open(dir.path(), None).unwrap();
        assert!(cache.peek(&Uuid::from_u128(1)).is_none());
        assert!(cache.peek(&Uuid::from_u128(2)).is_some());
    }

    #[test]
    fn lru_eviction() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TedsCache::open(dir.path(), Some(2)).unwrap();
        let a = insert(&cache, 1, 1);
        insert(&cache, 2, 1);
        cache.touch(&a);
        insert(&cache, 3, 1);
        let mut left: Vec<u128> = cache.entries().iter().map(|e| e.uuid.as_u128()).collect();
        left.sort();
        assert_eq!(left, [1, 3]);
        assert!(!dir.path().join(uuid_hex(&Uuid::from_u128(2))).exists());
        assert_eq!(TedsCache::open(dir.path(), None).unwrap().len(), 2);
    }

    #[test]
    fn flush_empties_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TedsCache::open(dir.path(), None).unwrap();
        insert(&cache, 1, 1);
        assert_eq!(cache.flush().unwrap(), 1);
        assert!(TedsCache::open(dir.path(), None).unwrap().is_empty());
    }
}
