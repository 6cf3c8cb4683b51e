//! Per-association stage timing. Stages are contiguous laps of one monotone
//! clock, so the total is exactly the sum of the stages.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use uuid::Uuid;

use crate::ident::uuid_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PacketDecoder,
    UuidProcessor,
    LocalCache,
    RegistryQuery,
    TedsDecoder,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::PacketDecoder,
        Stage::UuidProcessor,
        Stage::LocalCache,
        Stage::RegistryQuery,
        Stage::TedsDecoder,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn key(self) -> &'static str {
        match self {
            Stage::PacketDecoder => "packet_decoder",
            Stage::UuidProcessor => "uuid_processor",
            Stage::LocalCache => "local_cache",
            Stage::RegistryQuery => "registry_query",
            Stage::TedsDecoder => "teds_decoder",
        }
    }

    /// Row label in the latency report; the directory query keeps its
    /// historical "LDAP Query" name.
    pub const fn label(self) -> &'static str {
        match self {
            Stage::PacketDecoder => "Packet Decoder",
            Stage::UuidProcessor => "UUID Processor",
            Stage::LocalCache => "Local Cache",
            Stage::RegistryQuery => "LDAP Query",
            Stage::TedsDecoder => "TEDS Decoder",
        }
    }
}

/// A: TEDS found in the local cache. B: fetched from the directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLatencyRecord {
    pub seq: u64,
    #[serde(with = "crate::ident::serde_hex")]
    pub uuid: Uuid,
    pub case: CaseTag,
    /// Case B association that waited on another association's fetch
    /// instead of querying the directory itself.
    pub coalesced: bool,
    pub stage_ns: [u64; 5],
    pub total_ns: u64,
}

impl StageLatencyRecord {
    pub fn nanos(&self, stage: Stage) -> u64 {
        self.stage_ns[stage.index()]
    }

    pub fn micros(&self, stage: Stage) -> f64 {
        self.nanos(stage) as f64 / 1000.0
    }

    pub fn total_micros(&self) -> f64 {
        self.total_ns as f64 / 1000.0
    }
}

/// Lap timer feeding a `StageLatencyRecord`.
#[derive(Debug, Clone)]
pub struct StageClock {
    last: Instant,
    stage_ns: [u64; 5],
}

impl StageClock {
    pub fn starting_at(start: Instant) -> Self {
        Self {
            last: start,
            stage_ns: [0; 5],
        }
    }

    /// Charges the time since the previous lap to `stage`.
    pub fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.stage_ns[stage.index()] += now.saturating_duration_since(self.last).as_nanos() as u64;
        self.last = now;
    }

    /// Charges the time since the previous lap to the measured `parts`, and
    /// whatever they do not account for to `rest`.
    pub fn split_lap(&mut self, parts: &[(Stage, u64)], rest: Stage) {
        let now = Instant::now();
        let mut remaining = now.saturating_duration_since(self.last).as_nanos() as u64;
        for &(stage, ns) in parts {
            let take = ns.min(remaining);
            self.stage_ns[stage.index()] += take;
            remaining -= take;
        }
        self.stage_ns[rest.index()] += remaining;
        self.last = now;
    }

    pub fn finish(self, uuid: Uuid, case: CaseTag, coalesced: bool) -> StageLatencyRecord {
        StageLatencyRecord {
            seq: 0,
            uuid,
            case,
            coalesced,
            stage_ns: self.stage_ns,
            total_ns: self.stage_ns.iter().sum(),
        }
    }
}

/// Bounded in-memory history of association timings, safe for concurrent
/// appends. New records are also broadcast to live watchers.
pub struct LatencyRing {
    capacity: usize,
    inner: Mutex<(u64, VecDeque<StageLatencyRecord>)>,
    tx: broadcast::Sender<StageLatencyRecord>,
}

impl LatencyRing {
    pub fn new(capacity: usize) -> Self {
        let (tx, _) = broadcast::channel(1024);
        Self {
            capacity: capacity.max(1),
            inner: Mutex::new((0, VecDeque::new())),
            tx,
        }
    }

    pub fn push(&self, mut record: StageLatencyRecord) -> StageLatencyRecord {
        {
            let mut guard = self.inner.lock();
            guard.0 += 1;
            record.seq = guard.0;
            if guard.1.len() == self.capacity {
                guard.1.pop_front();
            }
            guard.1.push_back(record.clone());
            // sent under the lock so watchers see records in seq order
            let _ = self.tx.send(record.clone());
        }
        record
    }

    pub fn watch(&self) -> broadcast::Receiver<StageLatencyRecord> {
        self.tx.subscribe()
    }

    pub fn snapshot(&self) -> Vec<StageLatencyRecord> {
        self.inner.lock().1.iter().cloned().collect()
    }

    pub fn for_uuid(&self, uuid: &Uuid) -> Vec<StageLatencyRecord> {
        self.inner
            .lock()
            .1
            .iter()
            .filter(|r| r.uuid == *uuid)
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seq,uuid,case,coalesced");
        for s in Stage::ALL {
            let _ = write!(out, ",{}_us", s.key());
        }
        out.push_str(",total_us\n");
        for r in self.snapshot() {
            let _ = write!(
                out,
                "{},{},{:?},{}",
                r.seq,
                uuid_hex(&r.uuid),
                r.case,
                r.coalesced
            );
            for s in Stage::ALL {
                let _ = write!(out, ",{:.3}", r.micros(s));
            }
            let _ = writeln!(out, ",{:.3}", r.total_micros());
        }
        out
    }
}
