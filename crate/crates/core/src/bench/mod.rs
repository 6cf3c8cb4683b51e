//! Case A / Case B association latency benchmark.
//!
//! Case B is the first association of a TIM the NCAP has never seen, so its
//! TEDS come from the directory; every iteration uses a fresh uuid. Case A
//! is a repeat association of one TIM whose TEDS are already cached.

mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;
use tokio::sync::broadcast;
use tokio::time::{timeout_at, Instant};
use uuid::Uuid;

use crate::authoring::register_device;
use crate::fixtures::demo_description;
use crate::ncap::{CaseTag, Ncap, NcapConfig, NcapHandle, StageLatencyRecord};
use crate::registry::{
    self, Directory, DirectoryKey, RegistryClient, RegistryError, RegistryHandle, ServerOptions,
};
use crate::sim::{self, SimChannel, SimTimConfig, SimTimHandle, Waveform};

pub use report::{BenchReport, CacheOnceReport, CaseReport, StageStats};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark setup failed: {0}")]
    SetupFailure(String),
}

fn setup(what: &str, e: impl std::fmt::Display) -> BenchError {
    BenchError::SetupFailure(format!("{what}: {e}"))
}

/// An in-process directory and NCAP on loopback ports.
pub struct Testbed {
    pub registry: RegistryHandle,
    pub ncap: NcapHandle,
    pub client: RegistryClient,
}

impl Testbed {
    pub async fn start(
        inject_delay_us: u64,
        cache_dir: Option<PathBuf>,
    ) -> Result<Self, BenchError> {
        let registry = registry::spawn(
            "127.0.0.1:0",
            Arc::new(Directory::in_memory()),
            ServerOptions {
                inject_delay: Duration::from_micros(inject_delay_us),
            },
        )
        .await
        .map_err(|e| setup("directory", e))?;
        let client = RegistryClient::new(registry.local_addr.to_string());
        let mut config = NcapConfig::new(registry.local_addr.to_string());
        config.cache_dir = cache_dir;
        let ncap = Ncap::start(config).await.map_err(|e| setup("ncap", e))?;
        Ok(Self {
            registry,
            ncap,
            client,
        })
    }

    /// Registers a one-channel TIM sampling every `period_us`.
    pub async fn register(
        &self,
        uuid: Uuid,
        channels: u8,
        period_us: u32,
    ) -> Result<(), BenchError> {
        register_device(&demo_description(uuid, channels, period_us), &self.client)
            .await
            .map(drop)
            .map_err(|e| setup("registration", e))
    }

    pub async fn launch_tim(
        &self,
        uuid: Uuid,
        channels: u8,
        interval_ms: u64,
        stop_on_config: bool,
    ) -> Result<SimTimHandle, BenchError> {
        let mut cfg = SimTimConfig::new(
            uuid,
            (0..channels)
                .map(|id| SimChannel {
                    channel_id: id,
                    waveform: Waveform::Constant { value: 20.0 },
                    native_period_us: 100_000,
                })
                .collect(),
        );
        cfg.association_interval_ms = interval_ms;
        cfg.stop_on_config = stop_on_config;
        sim::run(cfg, &self.ncap.assoc_addr.to_string())
            .await
            .map_err(|e| setup("tim", e))
    }

    pub fn ncap(&self) -> &Ncap {
        &self.ncap.ncap
    }
}

/// Waits for `count` records about `uuid` that satisfy `want`.
async fn collect(
    watch: &mut broadcast::Receiver<StageLatencyRecord>,
    uuid: Uuid,
    count: usize,
    deadline: Instant,
    want: impl Fn(&StageLatencyRecord) -> bool,
) -> Result<Vec<StageLatencyRecord>, BenchError> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        match timeout_at(deadline, watch.recv()).await {
            Ok(Ok(r)) if r.uuid == uuid && want(&r) => out.push(r),
            Ok(Ok(_)) | Ok(Err(broadcast::error::RecvError::Lagged(_))) => {}
            Ok(Err(e)) => return Err(setup("latency feed", e)),
            Err(_) => {
                return Err(BenchError::SetupFailure(format!(
                    "timed out with {} of {count} associations recorded",
                    out.len()
                )))
            }
        }
    }
    Ok(out)
}

/// Passes iff the directory served every stored key of `uuid` exactly once.
pub async fn assert_cache_once(
    registry: &RegistryClient,
    uuid: Uuid,
) -> Result<CacheOnceReport, RegistryError> {
    let keys = registry.list(uuid).await?;
    let mut served = BTreeMap::new();
    for k in keys {
        served.insert(k, registry.stats_key(DirectoryKey::new(uuid, k)).await?);
    }
    let pass = !served.is_empty() && served.values().all(|&n| n == 1);
    Ok(CacheOnceReport { pass, served })
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub iterations: usize,
    pub inject_delay_us: u64,
    /// Association cadence of the simulated TIMs.
    pub association_interval_ms: u64,
    pub per_association_timeout: Duration,
}

impl BenchOptions {
    pub fn new(iterations: usize, inject_delay_us: u64) -> Self {
        Self {
            iterations,
            inject_delay_us,
            association_interval_ms: 100,
            per_association_timeout: Duration::from_secs(10),
        }
    }
}

pub async fn run_benchmark(
    iterations: usize,
    inject_delay_us: u64,
) -> Result<BenchReport, BenchError> {
    run_with(&BenchOptions::new(iterations, inject_delay_us)).await
}

pub async fn run_with(opts: &BenchOptions) -> Result<BenchReport, BenchError> {
    if opts.iterations == 0 {
        return Err(BenchError::SetupFailure(
            "iterations must be at least 1".into(),
        ));
    }
    let bed = Testbed::start(opts.inject_delay_us, None).await?;
    let mut watch = bed.ncap().latency().watch();

    let fetches_before = bed.ncap().registry_fetches();
    let mut case_b = Vec::with_capacity(opts.iterations);
    for _ in 0..opts.iterations {
        let uuid = Uuid::new_v4();
        bed.register(uuid, 1, 100_000).await?;
        let tim = bed
            .launch_tim(uuid, 1, opts.association_interval_ms, true)
            .await?;
        let deadline = Instant::now() + opts.per_association_timeout;
        let mut got = collect(&mut watch, uuid, 1, deadline, |r| {
            r.case == CaseTag::B && !r.coalesced
        })
        .await?;
        case_b.append(&mut got);
        drop(tim);
    }
    let case_b_fetches = bed.ncap().registry_fetches() - fetches_before;

    let warm = Uuid::new_v4();
    bed.register(warm, 1, 100_000).await?;
    let tim = bed
        .launch_tim(warm, 1, opts.association_interval_ms, false)
        .await?;
    let deadline = Instant::now() + opts.per_association_timeout;
    collect(&mut watch, warm, 1, deadline, |r| {
        r.case == CaseTag::B && !r.coalesced
    })
    .await?;
    let fetches_before = bed.ncap().registry_fetches();
    let deadline = Instant::now()
        + opts.per_association_timeout
        + Duration::from_millis(opts.association_interval_ms) * opts.iterations as u32;
    let case_a = collect(&mut watch, warm, opts.iterations, deadline, |r| {
        r.case == CaseTag::A
    })
    .await?;
    let case_a_fetches = bed.ncap().registry_fetches() - fetches_before;
    drop(tim);

    let cache_once = assert_cache_once(&bed.client, warm)
        .await
        .map_err(|e| setup("directory stats", e))?;
    Ok(BenchReport {
        iterations: opts.iterations,
        inject_delay_us: opts.inject_delay_us,
        case_a: CaseReport::from_records(CaseTag::A, case_a, case_a_fetches)
            .expect("iterations >= 1"),
        case_b: CaseReport::from_records(CaseTag::B, case_b, case_b_fetches)
            .expect("iterations >= 1"),
        cache_once,
    })
}
