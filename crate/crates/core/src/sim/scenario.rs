//! Fleet scenario files: one `[[tim]]` table per TIM.
//!
//! ```toml
//! [[tim]]
//! uuid = "random"                # or 32 hex digits
//! association_interval_ms = 100
//! stop_on_config = true
//! rebroadcast_after_ms = 1000
//! channels = ["0:sine:amplitude=2,offset=20", "1:constant:value=5"]
//! ```

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;
use uuid::Uuid;

use super::tim::SimTimConfig;
use super::waveform::SimChannel;
use super::SimError;
use crate::ident::parse_uuid_hex;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    tim: Vec<TimBlock>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TimBlock {
    uuid: String,
    association_interval_ms: Option<u64>,
    stop_on_config: Option<bool>,
    rebroadcast_after_ms: Option<u64>,
    bind: Option<String>,
    #[serde(default)]
    channels: Vec<String>,
}

pub fn parse_scenario(text: &str) -> Result<Vec<SimTimConfig>, SimError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| SimError::ParseError(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(file.tim.len());
    for (i, block) in file.tim.into_iter().enumerate() {
        let at = |msg: String| SimError::ParseError(format!("tim #{}: {msg}", i + 1));
        let uuid = if block.uuid == "random" {
            Uuid::new_v4()
        } else {
            parse_uuid_hex(&block.uuid).ok_or_else(|| at(format!("bad uuid {:?}", block.uuid)))?
        };
        if !seen.insert(uuid) {
            return Err(at(format!("duplicate uuid {}", block.uuid)));
        }
        let channels = block
            .channels
            .iter()
            .map(|c| c.parse::<SimChannel>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| at(e.to_string()))?;
        let mut cfg = SimTimConfig::new(uuid, channels);
        if let Some(v) = block.association_interval_ms {
            cfg.association_interval_ms = v;
        }
        if let Some(v) = block.stop_on_config {
            cfg.stop_on_config = v;
        }
        if let Some(v) = block.rebroadcast_after_ms {
            cfg.rebroadcast_after_ms = v;
        }
        if let Some(v) = block.bind {
            cfg.bind = v;
        }
        cfg.validate().map_err(|e| at(e.to_string()))?;
        out.push(cfg);
    }
    Ok(out)
}

pub fn scenario_from_file(path: impl AsRef<Path>) -> Result<Vec<SimTimConfig>, SimError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::ParseError(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}
