//! The gateway: listens for TIM association packets, resolves each TIM's
//! TEDS from a local cache or the directory, configures its channels over a
//! command stream and republishes its samples to topic subscribers.
//!
//! Association handling runs through five timed stages (packet decoder,
//! UUID processor, local cache, directory query, TEDS decoder); every
//! association leaves a [`StageLatencyRecord`].

mod api;
mod cache;
mod channel;
mod engine;
mod latency;
mod listener;
mod packet;
mod pubsub;
mod session;
mod singleflight;

use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;
use uuid::Uuid;

use crate::ident::uuid_hex;
use crate::registry::RegistryError;

pub use api::{ChannelUpdate, ChannelView, DeviceDetail, DeviceState, DeviceSummary};
pub use cache::{CacheEntry, DecodedTeds, TedsCache};
pub use channel::{
    apply_channel_model, ChannelModel, ChannelModelState, ChannelRuntimeState, ModelInput,
};
pub use engine::{Ncap, NcapHandle};
pub use latency::{CaseTag, LatencyRing, Stage, StageClock, StageLatencyRecord};
pub use listener::{listen, Listener, RawFrame};
pub use packet::{
    decode_packet, AssociationPacket, PacketError, ASSOC_LEN, ASSOC_MAGIC, ASSOC_TYPE,
    ASSOC_VERSION,
};
pub use pubsub::{topic_for, Broker, SampleEvent, Subscription, Timebase, TopicFilter};
pub use singleflight::SingleFlight;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NcapError {
    #[error("cannot bind {addr}: {reason}")]
    BindFailure { addr: String, reason: String },
    #[error("registry unreachable: {0}")]
    RegistryUnreachable(String),
    #[error("registry has no TEDS for {}", uuid_hex(.0))]
    UnknownDevice(Uuid),
    #[error("invalid TEDS for {}: {reason}", uuid_hex(.uuid))]
    InvalidTeds { uuid: Uuid, reason: String },
    #[error("TIM {} did not answer: {reason}", uuid_hex(.uuid))]
    TimUnresponsive { uuid: Uuid, reason: String },
    #[error("TIM {} has no channel {channel_id}", uuid_hex(.uuid))]
    UnknownChannel { uuid: Uuid, channel_id: u8 },
    #[error("TIM {} is not connected", uuid_hex(.0))]
    NotConnected(Uuid),
    #[error("sampling interval must be positive")]
    InvalidInterval,
    #[error("deadband must be a finite non-negative number")]
    InvalidDeadband,
    #[error("invalid topic pattern {0}")]
    InvalidPattern(String),
    #[error("cache storage: {0}")]
    CacheIo(String),
    #[error(transparent)]
    Packet(#[from] PacketError),
}

impl NcapError {
    pub(crate) fn from_registry(uuid: Uuid, e: RegistryError) -> Self {
        match e {
            RegistryError::NotFound => NcapError::UnknownDevice(uuid),
            RegistryError::Unreachable { .. } => NcapError::RegistryUnreachable(e.to_string()),
            other => NcapError::InvalidTeds {
                uuid,
                reason: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct NcapConfig {
    /// Datagram endpoint for association packets.
    pub assoc_listen: String,
    /// Stream endpoint for sample subscribers.
    pub data_listen: String,
    pub registry: String,
    /// Where the TEDS cache persists; memory only when unset.
    pub cache_dir: Option<PathBuf>,
    pub cache_max: Option<usize>,
    pub registry_timeout: Duration,
    /// How many latency records are kept.
    pub latency_capacity: usize,
}

impl NcapConfig {
    pub fn new(registry: impl Into<String>) -> Self {
        Self {
            assoc_listen: "127.0.0.1:0".into(),
            data_listen: "127.0.0.1:0".into(),
            registry: registry.into(),
            cache_dir: None,
            cache_max: None,
            registry_timeout: Duration::from_secs(5),
            latency_capacity: 4096,
        }
    }
}
