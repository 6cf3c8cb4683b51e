use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::template::{SemanticType, TedsTemplate};
use super::AuthoringError;
use crate::registry::ClassKey;
use crate::teds::{
    encode_teds, validate_teds_set, MetaTeds, PhyTeds, TedsClass, TedsRecord,
    TransducerChannelTeds, UserTransducerNameTeds, Violation,
};

/// Everything a manufacturer enters once for a TIM: enough to build its four
/// mandatory TEDS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimDescription {
    #[serde(with = "crate::ident::serde_hex")]
    pub uuid: Uuid,
    pub channel_count: u16,
    pub response_time_ms: u32,
    pub channels: Vec<TransducerChannelTeds>,
    pub name: UserTransducerNameTeds,
    pub phy: PhyTeds,
}

/// One encoded TEDS together with the directory key it is stored under.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTeds {
    pub class_key: ClassKey,
    pub record: TedsRecord,
    pub binary: Vec<u8>,
}

enum Value<'a> {
    Number(f64),
    Text(&'a str),
}

/// XML path of each attribute, keyed by template descriptor name.
fn attribute(descriptor: &str) -> &str {
    match descriptor {
        "channel_id" => "id",
        "channel_kind" => "kind",
        "model_number" => "model",
        "max_payload_octets" => "max_payload",
        other => other,
    }
}

pub(crate) fn channel_path(index: usize) -> String {
    format!("/tim/channel[{}]", index + 1)
}

impl TimDescription {
    pub fn meta(&self) -> MetaTeds {
        MetaTeds {
            uuid: self.uuid,
            channel_count: self.channel_count,
            response_time_ms: self.response_time_ms,
            extensions: vec![],
        }
    }

    /// Rebuilds a description from the decoded TEDS set of a TIM.
    pub fn from_records(
        meta: &MetaTeds,
        channels: &[TransducerChannelTeds],
        name: &UserTransducerNameTeds,
        phy: &PhyTeds,
    ) -> Self {
        Self {
            uuid: meta.uuid,
            channel_count: meta.channel_count,
            response_time_ms: meta.response_time_ms,
            channels: channels.to_vec(),
            name: name.clone(),
            phy: phy.clone(),
        }
    }

    fn numeric_and_text_values(&self) -> Vec<(String, TedsClass, &'static str, Value<'_>)> {
        use Value::*;
        let mut out = vec![
            (
                "/tim/meta".to_string(),
                TedsClass::Meta,
                "channel_count",
                Number(self.channel_count.into()),
            ),
            (
                "/tim/meta".to_string(),
                TedsClass::Meta,
                "response_time_ms",
                Number(self.response_time_ms.into()),
            ),
        ];
        for (i, ch) in self.channels.iter().enumerate() {
            let p = channel_path(i);
            let c = TedsClass::TransducerChannel;
            out.extend([
                (p.clone(), c, "channel_id", Number(ch.channel_id.into())),
                (p.clone(), c, "unit_code", Number(ch.unit_code.into())),
                (p.clone(), c, "range_min", Number(ch.range_min)),
                (p.clone(), c, "range_max", Number(ch.range_max)),
                (
                    p.clone(),
                    c,
                    "sample_period_us",
                    Number(ch.sample_period_us.into()),
                ),
                (p, c, "warmup_delay_us", Number(ch.warmup_delay_us.into())),
            ]);
        }
        let n = TedsClass::UserTransducerName;
        out.extend([
            (
                "/tim/name".to_string(),
                n,
                "manufacturer",
                Text(&self.name.manufacturer),
            ),
            (
                "/tim/name".to_string(),
                n,
                "model_number",
                Text(&self.name.model_number),
            ),
            (
                "/tim/name".to_string(),
                n,
                "user_name",
                Text(&self.name.user_name),
            ),
            (
                "/tim/phy".to_string(),
                TedsClass::Phy,
                "max_payload_octets",
                Number(self.phy.max_payload_octets.into()),
            ),
            (
                "/tim/phy".to_string(),
                TedsClass::Phy,
                "data_rate_bps",
                Number(self.phy.data_rate_bps.into()),
            ),
        ]);
        out
    }

    /// Checks every value against its template descriptor, then the set as a
    /// whole. Reports the first offending field by XML path.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check(&self) -> Result<(), AuthoringError> {
        let templates = TedsClass::ALL.map(TedsTemplate::for_class);
        for (path, class, name, value) in self.numeric_and_text_values() {
            let template = templates
                .iter()
                .find(|t| t.teds_class == class)
                .expect("all classes");
            let Some(desc) = template.descriptor(name) else {
                continue;
            };
            let field = format!("{path}/{}", attribute(name));
            let c = &desc.constraints;
            match (desc.semantic_type, value) {
                (SemanticType::Uint | SemanticType::Float, Value::Number(v)) => {
                    if let Some(min) = c.min.filter(|&min| !(v >= min)) {
                        return Err(AuthoringError::constraint(
                            field,
                            format!("{v} is below the minimum {min}"),
                        ));
                    }
                    if let Some(max) = c.max.filter(|&max| !(v <= max)) {
                        return Err(AuthoringError::constraint(
                            field,
                            format!("{v} exceeds the maximum {max}"),
                        ));
                    }
                }
                (SemanticType::Utf8, Value::Text(s)) => {
                    if let Some(limit) = c.max_octets.filter(|&l| s.len() > l) {
                        return Err(AuthoringError::constraint(
                            field,
                            format!("{} octets exceeds the {limit}-octet limit", s.len()),
                        ));
                    }
                }
                _ => {}
            }
        }
        let report = validate_teds_set(&self.meta(), &self.channels, &self.name, &self.phy);
        if let Some(first) = report.violations.first() {
            let field = match first {
                Violation::ChannelCountMismatch { .. } => "/tim/meta/channel_count".to_string(),
                Violation::DuplicateChannelId { channel_id } => {
                    let second = self
                        .channels
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| c.channel_id == *channel_id)
                        .nth(1)
                        .map_or(0, |(i, _)| i);
                    format!("{}/id", channel_path(second))
                }
                Violation::InvalidRecord { record, .. } => match record.strip_prefix("channel ") {
                    Some(id) => self
                        .channels
                        .iter()
                        .position(|c| c.channel_id.to_string() == id)
                        .map_or("/tim/channel".to_string(), channel_path),
                    None => format!("/tim/{record}"),
                },
            };
            return Err(AuthoringError::constraint(field, first.to_string()));
        }
        Ok(())
    }

    /// Typed records in emission order: meta, channels, name, phy.
    pub fn records(&self) -> Vec<TedsRecord> {
        let mut out = Vec::with_capacity(3 + self.channels.len());
        out.push(TedsRecord::Meta(self.meta()));
        out.extend(self.channels.iter().cloned().map(TedsRecord::Channel));
        out.push(TedsRecord::UserName(self.name.clone()));
        out.push(TedsRecord::Phy(self.phy.clone()));
        out
    }
}

/// Encodes the full TEDS set of a TIM: one Meta, one TransducerChannel per
/// channel, one UserTransducerName and one PHY.
pub fn generate_teds(desc: &TimDescription) -> Result<Vec<GeneratedTeds>, AuthoringError> {
    desc.check()?;
    desc.records()
        .into_iter()
        .map(|record| {
            let binary = encode_teds(&record)?;
            Ok(GeneratedTeds {
                class_key: ClassKey::for_record(&record),
                record,
                binary,
            })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::teds::{decode_teds, ChannelKind, Medium, Unit};

    pub fn temperature_tim(channels: u8) -> TimDescription {
        TimDescription {
            uuid: Uuid::from_u128(0x5eed_0000_0000_0000_0000_0000_0000_0001),
            channel_count: channels.into(),
            response_time_ms: 100,
            channels: (0..channels)
                .map(|id| TransducerChannelTeds {
                    channel_id: id,
                    channel_kind: ChannelKind::Sensor,
                    unit_code: Unit::Celsius.code(),
                    range_min: -40.0,
                    range_max: 125.0,
                    sample_period_us: 100_000,
                    warmup_delay_us: 500,
                    extensions: vec![],
                })
                .collect(),
            name: UserTransducerNameTeds {
                manufacturer: "Acme Sensing".into(),
                model_number: "TMP-36".into(),
                user_name: "lab bench".into(),
                extensions: vec![],
            },
            phy: PhyTeds {
                medium: Medium::SimStream,
                max_payload_octets: 64,
                data_rate_bps: 115_200,
                extensions: vec![],
            },
        }
    }

    #[test]
    fn generates_three_plus_channel_count() {
        assert_eq!(generate_teds(&temperature_tim(1)).unwrap().len(), 4);
        let three = generate_teds(&temperature_tim(3)).unwrap();
        assert_eq!(three.len(), 6);
        let keys: Vec<String> = three.iter().map(|g| g.class_key.to_string()).collect();
        assert_eq!(keys, ["01", "03:00", "03:01", "03:02", "0C", "0D"]);
    }

    #[test]
    fn binaries_decode_to_description_fields() {
        let desc = temperature_tim(2);
        for g in generate_teds(&desc).unwrap() {
            let decoded = decode_teds(&g.binary).unwrap();
            assert_eq!(decoded, g.record);
            match decoded {
                TedsRecord::Meta(m) => assert_eq!(m, desc.meta()),
                TedsRecord::Channel(c) => assert_eq!(c, desc.channels[c.channel_id as usize]),
                TedsRecord::UserName(n) => assert_eq!(n, desc.name),
                TedsRecord::Phy(p) => assert_eq!(p, desc.phy),
            }
        }
    }

    #[test]
    fn constraint_paths() {
        let mut d = temperature_tim(1);
        d.channel_count = 0;
        match d.check() {
            Err(AuthoringError::ConstraintViolation { field, .. }) => {
                assert_eq!(field, "/tim/meta/channel_count")
            }
            other => panic!("{other:?}"),
        }
        let mut d = temperature_tim(2);
        d.channels[1].channel_id = 0;
        match d.check() {
            Err(AuthoringError::ConstraintViolation { field, .. }) => {
                assert_eq!(field, "/tim/channel[2]/id")
            }
            other => panic!("{other:?}"),
        }
        let mut d = temperature_tim(2);
        d.channels[1].range_max = -50.0;
        match d.check() {
            Err(AuthoringError::ConstraintViolation { field, .. }) => {
                assert_eq!(field, "/tim/channel[2]")
            }
            other => panic!("{other:?}"),
        }
        let mut d = temperature_tim(1);
        d.phy.max_payload_octets = 10;
        match d.check() {
            Err(AuthoringError::ConstraintViolation { field, .. }) => {
                assert_eq!(field, "/tim/phy/max_payload")
            }
            other => panic!("{other:?}"),
        }
    }
}
