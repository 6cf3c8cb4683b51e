use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use bytes::Bytes;
use futures::future::try_join_all;
use parking_lot::Mutex;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio_util::sync::CancellationToken;
use uuid::Uuid;

use super::api::{ChannelUpdate, ChannelView, DeviceDetail, DeviceState, DeviceSummary};
use super::cache::{CacheEntry, DecodedTeds, TedsCache};
use super::channel::{ChannelModel, ChannelRuntimeState};
use super::latency::{CaseTag, LatencyRing, Stage, StageClock, StageLatencyRecord};
use super::listener::{listen, RawFrame};
use super::packet::decode_packet;
use super::pubsub::{Broker, Subscription, Timebase};
use super::session::Session;
use super::singleflight::SingleFlight;
use super::{NcapConfig, NcapError};
use crate::registry::{DirectoryKey, RegistryClient};

#[derive(Clone)]
struct Fetched {
    entry: Arc<CacheEntry>,
    registry_ns: u64,
    decode_ns: u64,
    // another fetch filled the cache between the lookup and this one
    already_cached: bool,
}

enum Link {
    Configuring,
    Live(Arc<Session>),
}

struct Inner {
    registry: RegistryClient,
    cache: TedsCache,
    flights: SingleFlight<Uuid, Result<Fetched, NcapError>>,
    latency: LatencyRing,
    broker: Broker,
    timebase: Timebase,
    links: Mutex<HashMap<Uuid, Link>>,
    failures: Mutex<HashMap<Uuid, String>>,
    registry_fetches: AtomicU64,
    rejected_packets: AtomicU64,
    cancel: CancellationToken,
}

/// Shared handle to the gateway state. Cheap to clone.
#[derive(Clone)]
pub struct Ncap {
    inner: Arc<Inner>,
}

/// A running gateway with its bound endpoints. Dropping it stops the
/// listeners and every TIM session.
pub struct NcapHandle {
    pub ncap: Ncap,
    pub assoc_addr: SocketAddr,
    pub data_addr: SocketAddr,
    cancel: CancellationToken,
}

impl NcapHandle {
    pub fn shutdown(self) {
        self.cancel.cancel();
    }
}

impl Drop for NcapHandle {
    fn drop(&mut self) {
        self.cancel.cancel();
    }
}

impl Ncap {
    pub fn new(registry: RegistryClient, cache: TedsCache, latency_capacity: usize) -> Self {
        Self {
            inner: Arc::new(Inner {
                registry,
                cache,
                flights: SingleFlight::new(),
                latency: LatencyRing::new(latency_capacity),
                broker: Broker::new(),
                timebase: Timebase::new(),
                links: Mutex::default(),
                failures: Mutex::default(),
                registry_fetches: AtomicU64::new(0),
                rejected_packets: AtomicU64::new(0),
                cancel: CancellationToken::new(),
            }),
        }
    }

    /// Opens the cache, binds both endpoints and starts serving.
    pub async fn start(config: NcapConfig) -> Result<NcapHandle, NcapError> {
        let cache = match &config.cache_dir {
            Some(dir) => TedsCache::open(dir, config.cache_max)?,
            None => TedsCache::in_memory(config.cache_max),
        };
        let registry =
            RegistryClient::new(config.registry.clone()).with_timeout(config.registry_timeout);
        let ncap = Ncap::new(registry, cache, config.latency_capacity);
        let mut listener = listen(&config.assoc_listen).await?;
        let data =
            TcpListener::bind(&config.data_listen)
                .await
                .map_err(|e| NcapError::BindFailure {
                    addr: config.data_listen.clone(),
                    reason: e.to_string(),
                })?;
        let data_addr = data.local_addr().map_err(|e| NcapError::BindFailure {
            addr: config.data_listen.clone(),
            reason: e.to_string(),
        })?;
        let cancel = ncap.inner.cancel.clone();
        let assoc_addr = listener.local_addr;

        let n = ncap.clone();
        let stop = cancel.clone();
        tokio::spawn(async move {
            loop {
                let frame = tokio::select! {
                    _ = stop.cancelled() => break,
                    f = listener.frames.recv() => f,
                };
                let Some(frame) = frame else { break };
                let n = n.clone();
                tokio::spawn(async move {
                    if let Err(e) = n.process_frame(frame).await {
                        tracing::debug!(error = %e, "association failed");
                    }
                });
            }
        });

        let n = ncap.clone();
        let stop = cancel.clone();
        tokio::spawn(async move {
            loop {
                let accepted = tokio::select! {
                    _ = stop.cancelled() => break,
                    a = data.accept() => a,
                };
                match accepted {
                    Ok((stream, _)) => {
                        tokio::spawn(serve_subscriber(n.clone(), stream, stop.clone()));
                    }
                    Err(e) => tracing::debug!(error = %e, "subscriber accept failed"),
                }
            }
        });

        Ok(NcapHandle {
            ncap,
            assoc_addr,
            data_addr,
            cancel,
        })
    }

    pub fn latency(&self) -> &LatencyRing {
        &self.inner.latency
    }

    pub fn cache(&self) -> &TedsCache {
        &self.inner.cache
    }

    pub fn broker(&self) -> &Broker {
        &self.inner.broker
    }

    pub fn subscribe(&self, pattern: &str) -> Result<Subscription, NcapError> {
        self.inner.broker.subscribe(pattern)
    }

    /// Directory fetches performed (one per cache miss that was not
    /// coalesced into another).
    pub fn registry_fetches(&self) -> u64 {
        self.inner.registry_fetches.load(Ordering::Relaxed)
    }

    pub fn rejected_packets(&self) -> u64 {
        self.inner.rejected_packets.load(Ordering::Relaxed)
    }

    pub fn flush_cache(&self) -> Result<usize, NcapError> {
        self.inner.cache.flush()
    }

    /// Handles one association datagram end to end: decode, resolve TEDS,
    /// record stage timings and, if the TIM has no live session, start
    /// configuring it.
    pub async fn process_frame(&self, frame: RawFrame) -> Result<StageLatencyRecord, NcapError> {
        let mut clock = StageClock::starting_at(frame.arrival);
        let packet = decode_packet(&frame.bytes).inspect_err(|_| {
            self.inner.rejected_packets.fetch_add(1, Ordering::Relaxed);
        })?;
        clock.lap(Stage::PacketDecoder);
        let uuid = packet.uuid;
        let (entry, case, coalesced) = self.resolve(uuid, &mut clock).await?;
        let record = self.inner.latency.push(clock.finish(uuid, case, coalesced));
        self.ensure_session(uuid, frame.src, entry);
        Ok(record)
    }

    /// Cache lookup for `uuid`; a hit is counted on the entry.
    pub fn process_uuid(&self, uuid: Uuid) -> Option<Arc<CacheEntry>> {
        let entry = self.inner.cache.peek(&uuid)?;
        self.inner.cache.touch(&entry);
        Some(entry)
    }

    /// Fetches, validates and caches every TEDS the directory lists for
    /// `uuid`. Concurrent calls for one uuid share a single fetch.
    pub async fn fetch_and_cache(&self, uuid: Uuid) -> Result<Arc<CacheEntry>, NcapError> {
        let (res, _) = self.fetch(uuid).await;
        res.map(|f| f.entry)
    }

    async fn fetch(&self, uuid: Uuid) -> (Result<Fetched, NcapError>, bool) {
        let inner = self.inner.clone();
        self.inner
            .flights
            .run(uuid, move || fetch_task(inner, uuid))
            .await
    }

    async fn resolve(
        &self,
        uuid: Uuid,
        clock: &mut StageClock,
    ) -> Result<(Arc<CacheEntry>, CaseTag, bool), NcapError> {
        let cached = self.inner.cache.peek(&uuid);
        clock.lap(Stage::UuidProcessor);
        if let Some(entry) = cached {
            self.inner.cache.touch(&entry);
            let binaries = entry.binaries.clone();
            clock.lap(Stage::LocalCache);
            let decoded = DecodedTeds::from_binaries(uuid, &binaries)?;
            debug_assert_eq!(decoded, entry.decoded);
            clock.lap(Stage::TedsDecoder);
            return Ok((entry, CaseTag::A, false));
        }
        let (res, leader) = self.fetch(uuid).await;
        let fetched = res?;
        if fetched.already_cached {
            self.inner.cache.touch(&fetched.entry);
            clock.lap(Stage::LocalCache);
            return Ok((fetched.entry, CaseTag::A, false));
        }
        if !leader {
            self.inner.cache.touch(&fetched.entry);
        }
        clock.split_lap(
            &[
                (Stage::RegistryQuery, fetched.registry_ns),
                (Stage::TedsDecoder, fetched.decode_ns),
            ],
            Stage::LocalCache,
        );
        Ok((fetched.entry, CaseTag::B, !leader))
    }

    fn ensure_session(&self, uuid: Uuid, src: SocketAddr, entry: Arc<CacheEntry>) {
        {
            let mut links = self.inner.links.lock();
            match links.get(&uuid) {
                Some(Link::Configuring) => return,
                Some(Link::Live(s)) if s.is_alive() => return,
                _ => {}
            }
            links.insert(uuid, Link::Configuring);
        }
        let inner = self.inner.clone();
        tokio::spawn(async move {
            let opened = Session::open(
                uuid,
                src,
                &entry.decoded,
                inner.broker.clone(),
                inner.timebase,
                &inner.cancel,
            )
            .await;
            let mut links = inner.links.lock();
            match opened {
                Ok(session) => {
                    links.insert(uuid, Link::Live(session));
                    inner.failures.lock().remove(&uuid);
                }
                Err(e) => {
                    tracing::warn!(error = %e, "TIM configuration failed");
                    links.remove(&uuid);
                    inner.failures.lock().insert(uuid, e.to_string());
                }
            }
        });
    }

    fn session(&self, uuid: Uuid) -> Result<Arc<Session>, NcapError> {
        match self.inner.links.lock().get(&uuid) {
            Some(Link::Live(s)) if s.is_alive() => Ok(s.clone()),
            _ if self.inner.cache.peek(&uuid).is_some() => Err(NcapError::NotConnected(uuid)),
            _ => Err(NcapError::UnknownDevice(uuid)),
        }
    }

    /// Channel states of every channel of the connected TIM `uuid`.
    pub fn configure_state(&self, uuid: Uuid) -> Result<Vec<ChannelRuntimeState>, NcapError> {
        Ok(self.session(uuid)?.states())
    }

    pub async fn set_channel_enabled(
        &self,
        uuid: Uuid,
        channel_id: u8,
        enabled: bool,
    ) -> Result<ChannelRuntimeState, NcapError> {
        self.session(uuid)?.set_enabled(channel_id, enabled).await
    }

    pub async fn set_sampling_interval(
        &self,
        uuid: Uuid,
        channel_id: u8,
        interval_us: u32,
    ) -> Result<ChannelRuntimeState, NcapError> {
        if interval_us == 0 {
            return Err(NcapError::InvalidInterval);
        }
        self.session(uuid)?
            .set_interval(channel_id, interval_us)
            .await
    }

    pub fn set_channel_model(
        &self,
        uuid: Uuid,
        channel_id: u8,
        model: ChannelModel,
        deadband: Option<f64>,
    ) -> Result<ChannelRuntimeState, NcapError> {
        self.session(uuid)?.set_model(channel_id, model, deadband)
    }

    /// Applies the set fields of `update` in the order model, interval,
    /// enabled, so a channel switched on starts with its new settings.
    pub async fn apply_update(
        &self,
        uuid: Uuid,
        channel_id: u8,
        update: &ChannelUpdate,
    ) -> Result<ChannelRuntimeState, NcapError> {
        let session = self.session(uuid)?;
        if update.interval_us == Some(0) {
            return Err(NcapError::InvalidInterval);
        }
        let mut state = None;
        if update.model.is_some() || update.deadband.is_some() {
            let current = session
                .states()
                .into_iter()
                .find(|s| s.channel_id == channel_id)
                .ok_or(NcapError::UnknownChannel { uuid, channel_id })?;
            let model = update.model.unwrap_or(current.channel_model);
            state = Some(session.set_model(channel_id, model, update.deadband)?);
        }
        if let Some(us) = update.interval_us {
            state = Some(session.set_interval(channel_id, us).await?);
        }
        if let Some(on) = update.enabled {
            state = Some(session.set_enabled(channel_id, on).await?);
        }
        match state {
            Some(s) => Ok(s),
            None => session
                .states()
                .into_iter()
                .find(|s| s.channel_id == channel_id)
                .ok_or(NcapError::UnknownChannel { uuid, channel_id }),
        }
    }

    pub fn devices(&self) -> Vec<DeviceSummary> {
        self.inner
            .cache
            .entries()
            .iter()
            .map(|e| self.summary(e))
            .collect()
    }

    pub fn device(&self, uuid: Uuid) -> Option<DeviceDetail> {
        let entry = self.inner.cache.peek(&uuid)?;
        let runtime: BTreeMap<u8, ChannelRuntimeState> = self
            .session(uuid)
            .map(|s| {
                s.states()
                    .into_iter()
                    .map(|st| (st.channel_id, st))
                    .collect()
            })
            .unwrap_or_default();
        let d = &entry.decoded;
        Some(DeviceDetail {
            summary: self.summary(&entry),
            meta: d.meta.clone(),
            name: d.name.clone(),
            phy: d.phy.clone(),
            channels: d
                .channels
                .iter()
                .map(|c| ChannelView {
                    teds: c.clone(),
                    runtime: runtime.get(&c.channel_id).cloned(),
                })
                .collect(),
        })
    }

    fn summary(&self, entry: &CacheEntry) -> DeviceSummary {
        let last_error = self.inner.failures.lock().get(&entry.uuid).cloned();
        let (state, tim_addr) = match self.inner.links.lock().get(&entry.uuid) {
            Some(Link::Configuring) => (DeviceState::Configuring, None),
            Some(Link::Live(s)) if s.is_alive() => (DeviceState::Live, Some(s.addr.to_string())),
            _ if last_error.is_some() => (DeviceState::Failed, None),
            _ => (DeviceState::Cached, None),
        };
        DeviceSummary {
            uuid: entry.uuid,
            state,
            user_name: entry.decoded.name.user_name.clone(),
            channel_count: entry.decoded.meta.channel_count,
            hit_count: entry.hit_count(),
            fetched_at_ms: entry.fetched_at_ms(),
            tim_addr,
            last_error,
        }
    }
}

async fn fetch_task(inner: Arc<Inner>, uuid: Uuid) -> Result<Fetched, NcapError> {
    if let Some(entry) = inner.cache.peek(&uuid) {
        return Ok(Fetched {
            entry,
            registry_ns: 0,
            decode_ns: 0,
            already_cached: true,
        });
    }
    inner.registry_fetches.fetch_add(1, Ordering::Relaxed);
    let registry = &inner.registry;
    let t = Instant::now();
    let keys = registry
        .list(uuid)
        .await
        .map_err(|e| NcapError::from_registry(uuid, e))?;
    if keys.is_empty() {
        return Err(NcapError::UnknownDevice(uuid));
    }
    let gets = keys.iter().map(|k| async move {
        let bin = registry.get(DirectoryKey::new(uuid, *k)).await?;
        Ok::<_, crate::registry::RegistryError>((*k, Bytes::from(bin)))
    });
    let binaries: BTreeMap<_, _> = try_join_all(gets)
        .await
        .map_err(|e| NcapError::from_registry(uuid, e))?
        .into_iter()
        .collect();
    let registry_ns = t.elapsed().as_nanos() as u64;

    let t = Instant::now();
    let decoded = DecodedTeds::from_binaries(uuid, &binaries)?;
    let decode_ns = t.elapsed().as_nanos() as u64;

    let entry = inner.cache.insert(uuid, binaries, decoded)?;
    Ok(Fetched {
        entry,
        registry_ns,
        decode_ns,
        already_cached: false,
    })
}

/// Subscriber stream: the client sends `SUB <pattern>`, gets `OK` (or
/// `ERR <reason>`), then one line per matching event.
async fn serve_subscriber(ncap: Ncap, stream: TcpStream, stop: CancellationToken) {
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut line = String::new();
    match (&mut reader).take(512).read_line(&mut line).await {
        Ok(n) if n > 0 => {}
        _ => return,
    }
    let pattern = match line.trim_end().split_once(' ') {
        Some(("SUB", p)) => p.trim(),
        _ => {
            let _ = write
                .write_all(b"ERR PROTOCOL expected SUB <pattern>\n")
                .await;
            return;
        }
    };
    let mut sub = match ncap.subscribe(pattern) {
        Ok(s) => s,
        Err(e) => {
            let _ = write.write_all(format!("ERR {e}\n").as_bytes()).await;
            return;
        }
    };
    if write.write_all(b"OK\n").await.is_err() {
        return;
    }
    let mut scratch = [0u8; 64];
    loop {
        tokio::select! {
            _ = stop.cancelled() => break,
            // any read result other than more input means the client left
            r = reader.read(&mut scratch) => if !matches!(r, Ok(n) if n > 0) { break },
            ev = sub.recv() => {
                let Some(ev) = ev else { break };
                let mut out = ev.to_line();
                out.push('\n');
                if write.write_all(out.as_bytes()).await.is_err() {
                    break;
                }
            }
        }
    }
}
