use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    EventDriven,
    #[default]
    SampleAndHold,
}

impl ChannelModel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "event_driven" => Some(ChannelModel::EventDriven),
            "sample_and_hold" => Some(ChannelModel::SampleAndHold),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRuntimeState {
    #[serde(with = "crate::ident::serde_hex")]
    pub uuid: Uuid,
    pub channel_id: u8,
    pub enabled: bool,
    pub sampling_interval_us: u32,
    pub channel_model: ChannelModel,
    /// Only consulted by the event-driven model.
    pub deadband: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelInput {
    /// A raw value reported by the TIM.
    Sample(f64),
    /// The channel's sampling interval elapsed.
    Tick,
}

/// Emission state of one channel: the most recent raw value and the value
/// last published.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelModelState {
    pub held: Option<f64>,
    pub last_emitted: Option<f64>,
}

impl ChannelModelState {
    /// Feeds one input through the channel model and returns the value to
    /// publish, if any.
    pub fn apply(&mut self, model: ChannelModel, deadband: f64, input: ModelInput) -> Option<f64> {
        let out = match (model, input) {
            (ChannelModel::SampleAndHold, ModelInput::Sample(v)) => {
                self.held = Some(v);
                None
            }
            (ChannelModel::SampleAndHold, ModelInput::Tick) => self.held,
            (ChannelModel::EventDriven, ModelInput::Sample(v)) => {
                self.held = Some(v);
                match self.last_emitted {
                    Some(last) if (v - last).abs() <= deadband => None,
                    _ => Some(v),
                }
            }
            (ChannelModel::EventDriven, ModelInput::Tick) => None,
        };
        if out.is_some() {
            self.last_emitted = out;
        }
        out
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Runs `inputs` through a fresh model state and collects what it emits.
pub fn apply_channel_model(model: ChannelModel, deadband: f64, inputs: &[ModelInput]) -> Vec<f64> {
    let mut state = ChannelModelState::default();
    inputs
        .iter()
        .filter_map(|i| state.apply(model, deadband, *i))
        .collect()
}
