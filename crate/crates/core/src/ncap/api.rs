use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::channel::{ChannelModel, ChannelRuntimeState};
use crate::teds::{MetaTeds, PhyTeds, TransducerChannelTeds, UserTransducerNameTeds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceState {
    /// TEDS cached, no command stream.
    Cached,
    Configuring,
    Live,
    /// The last configuration attempt failed.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    #[serde(with = "crate::ident::serde_hex")]
    pub uuid: Uuid,
    pub state: DeviceState,
    pub user_name: String,
    pub channel_count: u16,
    pub hit_count: u64,
    pub fetched_at_ms: u64,
    /// Command endpoint of the connected TIM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tim_addr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelView {
    pub teds: TransducerChannelTeds,
    /// Present while the TIM is connected.
    pub runtime: Option<ChannelRuntimeState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDetail {
    pub summary: DeviceSummary,
    pub meta: MetaTeds,
    pub name: UserTransducerNameTeds,
    pub phy: PhyTeds,
    pub channels: Vec<ChannelView>,
}

/// Changes to one channel; unset fields are left alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_us: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ChannelModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadband: Option<f64>,
}
