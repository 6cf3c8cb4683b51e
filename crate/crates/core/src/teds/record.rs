use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::block::TedsBlock;
use super::tlv::{TlvField, MAX_TLV_VALUE};
use super::{TedsClass, TedsError};

/// Upper bound for each text field of the user's transducer name TEDS.
pub const MAX_TEXT_OCTETS: usize = MAX_TLV_VALUE;

/// Smallest PHY payload that still carries an association packet.
const MIN_PHY_PAYLOAD: u16 = 22;

mod code {
    pub mod meta {
        pub const UUID: u8 = 0x04;
        pub const CHANNEL_COUNT: u8 = 0x0D;
        pub const RESPONSE_TIME_MS: u8 = 0x0E;
    }
    pub mod channel {
        pub const CHANNEL_ID: u8 = 0x0A;
        pub const KIND: u8 = 0x0B;
        pub const UNIT_CODE: u8 = 0x0C;
        pub const RANGE_MIN: u8 = 0x0D;
        pub const RANGE_MAX: u8 = 0x0E;
        pub const SAMPLE_PERIOD_US: u8 = 0x0F;
        pub const WARMUP_DELAY_US: u8 = 0x10;
    }
    pub mod name {
        pub const MANUFACTURER: u8 = 0x0A;
        pub const MODEL: u8 = 0x0B;
        pub const USER_NAME: u8 = 0x0C;
    }
    pub mod phy {
        pub const MEDIUM: u8 = 0x0A;
        pub const MAX_PAYLOAD: u8 = 0x0B;
        pub const DATA_RATE_BPS: u8 = 0x0C;
    }
}

/// Type codes interpreted for `class`, in emission order.
fn known_codes(class: TedsClass) -> &'static [u8] {
    use code::*;
    match class {
        TedsClass::Meta => &[meta::UUID, meta::CHANNEL_COUNT, meta::RESPONSE_TIME_MS],
        TedsClass::TransducerChannel => &[
            channel::CHANNEL_ID,
            channel::KIND,
            channel::UNIT_CODE,
            channel::RANGE_MIN,
            channel::RANGE_MAX,
            channel::SAMPLE_PERIOD_US,
            channel::WARMUP_DELAY_US,
        ],
        TedsClass::UserTransducerName => &[name::MANUFACTURER, name::MODEL, name::USER_NAME],
        TedsClass::Phy => &[phy::MEDIUM, phy::MAX_PAYLOAD, phy::DATA_RATE_BPS],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    #[default]
    Sensor,
    Actuator,
}

impl ChannelKind {
    pub const fn code(self) -> u8 {
        match self {
            ChannelKind::Sensor => 0,
            ChannelKind::Actuator => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ChannelKind::Sensor),
            1 => Some(ChannelKind::Actuator),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    #[default]
    SimStream,
    Ble,
    Usb,
}

impl Medium {
    pub const fn code(self) -> u8 {
        match self {
            Medium::SimStream => 0,
            Medium::Ble => 1,
            Medium::Usb => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Medium::SimStream),
            1 => Some(Medium::Ble),
            2 => Some(Medium::Usb),
            _ => None,
        }
    }
}

/// Physical units known to this implementation. Channel TEDS carry the raw
/// 16-bit code so reserved codes survive a decode/encode cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Unitless = 0,
    Kelvin = 1,
    Celsius = 2,
    Pascal = 3,
    Lux = 4,
    PercentRh = 5,
    MetrePerSecondSquared = 6,
    Volt = 7,
    Ampere = 8,
}

impl Unit {
    pub fn from_code(code: u16) -> Option<Self> {
        use Unit::*;
        Some(match code {
            0 => Unitless,
            1 => Kelvin,
            2 => Celsius,
            3 => Pascal,
            4 => Lux,
            5 => PercentRh,
            6 => MetrePerSecondSquared,
            7 => Volt,
            8 => Ampere,
            _ => return None,
        })
    }

    pub const fn code(self) -> u16 {
        self as u16
    }

    pub const fn symbol(self) -> &'static str {
        use Unit::*;
        match self {
            Unitless => "",
            Kelvin => "K",
            Celsius => "°C",
            Pascal => "Pa",
            Lux => "lx",
            PercentRh => "%RH",
            MetrePerSecondSquared => "m/s²",
            Volt => "V",
            Ampere => "A",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetaTeds {
    #[serde(with = "crate::ident::serde_hex")]
    pub uuid: Uuid,
    pub channel_count: u16,
    pub response_time_ms: u32,
    /// Uninterpreted fields carried through unchanged.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extensions: Vec<TlvField>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransducerChannelTeds {
    pub channel_id: u8,
    pub channel_kind: ChannelKind,
    pub unit_code: u16,
    pub range_min: f64,
    pub range_max: f64,
    pub sample_period_us: u32,
    pub warmup_delay_us: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extensions: Vec<TlvField>,
}

impl TransducerChannelTeds {
    pub fn in_range(&self, value: f64) -> bool {
        value >= self.range_min && value <= self.range_max
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UserTransducerNameTeds {
    pub manufacturer: String,
    pub model_number: String,
    pub user_name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extensions: Vec<TlvField>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhyTeds {
    pub medium: Medium,
    pub max_payload_octets: u16,
    pub data_rate_bps: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extensions: Vec<TlvField>,
}

/// A decoded TEDS of one of the four implemented classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum TedsRecord {
    Meta(MetaTeds),
    Channel(TransducerChannelTeds),
    UserName(UserTransducerNameTeds),
    Phy(PhyTeds),
}

impl From<MetaTeds> for TedsRecord {
    fn from(r: MetaTeds) -> Self {
        TedsRecord::Meta(r)
    }
}
impl From<TransducerChannelTeds> for TedsRecord {
    fn from(r: TransducerChannelTeds) -> Self {
        TedsRecord::Channel(r)
    }
}
impl From<UserTransducerNameTeds> for TedsRecord {
    fn from(r: UserTransducerNameTeds) -> Self {
        TedsRecord::UserName(r)
    }
}
impl From<PhyTeds> for TedsRecord {
    fn from(r: PhyTeds) -> Self {
        TedsRecord::Phy(r)
    }
}

impl MetaTeds {
    pub fn validate(&self) -> Result<(), TedsError> {
        if self.channel_count < 1 {
            return Err(TedsError::InvalidRecord(
                "meta channel_count must be at least 1".into(),
            ));
        }
        if self.response_time_ms == 0 {
            return Err(TedsError::InvalidRecord(
                "meta response_time_ms must be positive".into(),
            ));
        }
        check_extensions(TedsClass::Meta, &self.extensions)
    }
}

impl TransducerChannelTeds {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), TedsError> {
        // also rejects NaN bounds
        if !(self.range_min < self.range_max) {
            return Err(TedsError::InvalidRecord(format!(
                "channel {}: range_min {} must be below range_max {}",
                self.channel_id, self.range_min, self.range_max
            )));
        }
        if self.sample_period_us == 0 {
            return Err(TedsError::InvalidRecord(format!(
                "channel {}: sample_period_us must be positive",
                self.channel_id
            )));
        }
        check_extensions(TedsClass::TransducerChannel, &self.extensions)
    }
}

impl UserTransducerNameTeds {
    pub fn validate(&self) -> Result<(), TedsError> {
        for (label, text) in [
            ("manufacturer", &self.manufacturer),
            ("model_number", &self.model_number),
            ("user_name", &self.user_name),
        ] {
            if text.len() > MAX_TEXT_OCTETS {
                return Err(TedsError::InvalidRecord(format!(
                    "{label} is {} octets, limit is {MAX_TEXT_OCTETS}",
                    text.len()
                )));
            }
        }
        check_extensions(TedsClass::UserTransducerName, &self.extensions)
    }
}

impl PhyTeds {
    pub fn validate(&self) -> Result<(), TedsError> {
        if self.max_payload_octets < MIN_PHY_PAYLOAD {
            return Err(TedsError::InvalidRecord(format!(
                "phy max_payload_octets {} cannot carry a {MIN_PHY_PAYLOAD}-octet association packet",
                self.max_payload_octets
            )));
        }
        check_extensions(TedsClass::Phy, &self.extensions)
    }
}

fn check_extensions(class: TedsClass, extensions: &[TlvField]) -> Result<(), TedsError> {
    let known = known_codes(class);
    for field in extensions {
        if known.contains(&field.type_code) {
            return Err(TedsError::InvalidRecord(format!(
                "extension field {:#04x} collides with a {class} field",
                field.type_code
            )));
        }
        if field.value.len() > MAX_TLV_VALUE {
            return Err(TedsError::OversizeValue {
                len: field.value.len(),
            });
        }
    }
    Ok(())
}

impl TedsRecord {
    pub fn class(&self) -> TedsClass {
        match self {
            TedsRecord::Meta(_) => TedsClass::Meta,
            TedsRecord::Channel(_) => TedsClass::TransducerChannel,
            TedsRecord::UserName(_) => TedsClass::UserTransducerName,
            TedsRecord::Phy(_) => TedsClass::Phy,
        }
    }

    pub fn validate(&self) -> Result<(), TedsError> {
        match self {
            TedsRecord::Meta(r) => r.validate(),
            TedsRecord::Channel(r) => r.validate(),
            TedsRecord::UserName(r) => r.validate(),
            TedsRecord::Phy(r) => r.validate(),
        }
    }

    pub fn to_block(&self) -> Result<TedsBlock, TedsError> {
        self.validate()?;
        let mut fields = match self {
            TedsRecord::Meta(r) => {
                use code::meta::*;
                vec![
                    TlvField::new(UUID, r.uuid.as_bytes().to_vec()),
                    TlvField::new(CHANNEL_COUNT, r.channel_count.to_be_bytes()),
                    TlvField::new(RESPONSE_TIME_MS, r.response_time_ms.to_be_bytes()),
                ]
            }
            TedsRecord::Channel(r) => {
                use code::channel::*;
                vec![
                    TlvField::new(CHANNEL_ID, [r.channel_id]),
                    TlvField::new(KIND, [r.channel_kind.code()]),
                    TlvField::new(UNIT_CODE, r.unit_code.to_be_bytes()),
                    TlvField::new(RANGE_MIN, r.range_min.to_be_bytes()),
                    TlvField::new(RANGE_MAX, r.range_max.to_be_bytes()),
                    TlvField::new(SAMPLE_PERIOD_US, r.sample_period_us.to_be_bytes()),
                    TlvField::new(WARMUP_DELAY_US, r.warmup_delay_us.to_be_bytes()),
                ]
            }
            TedsRecord::UserName(r) => {
                use code::name::*;
                vec![
                    TlvField::new(MANUFACTURER, r.manufacturer.as_bytes()),
                    TlvField::new(MODEL, r.model_number.as_bytes()),
                    TlvField::new(USER_NAME, r.user_name.as_bytes()),
                ]
            }
            TedsRecord::Phy(r) => {
                use code::phy::*;
                vec![
                    TlvField::new(MEDIUM, [r.medium.code()]),
                    TlvField::new(MAX_PAYLOAD, r.max_payload_octets.to_be_bytes()),
                    TlvField::new(DATA_RATE_BPS, r.data_rate_bps.to_be_bytes()),
                ]
            }
        };
        fields.extend(self.extensions().iter().cloned());
        Ok(TedsBlock::new(self.class(), fields))
    }

    fn extensions(&self) -> &[TlvField] {
        match self {
            TedsRecord::Meta(r) => &r.extensions,
            TedsRecord::Channel(r) => &r.extensions,
            TedsRecord::UserName(r) => &r.extensions,
            TedsRecord::Phy(r) => &r.extensions,
        }
    }

    pub fn from_block(block: &TedsBlock) -> Result<Self, TedsError> {
        let fields = FieldSet::split(block)?;
        let record = match block.class {
            TedsClass::Meta => {
                use code::meta::*;
                TedsRecord::Meta(MetaTeds {
                    uuid: Uuid::from_bytes(fields.array(UUID)?),
                    channel_count: u16::from_be_bytes(fields.array(CHANNEL_COUNT)?),
                    response_time_ms: u32::from_be_bytes(fields.array(RESPONSE_TIME_MS)?),
                    extensions: fields.extensions,
                })
            }
            TedsClass::TransducerChannel => {
                use code::channel::*;
                let [kind] = fields.array(KIND)?;
                TedsRecord::Channel(TransducerChannelTeds {
                    channel_id: u8::from_be_bytes(fields.array(CHANNEL_ID)?),
                    channel_kind: ChannelKind::from_code(kind)
                        .ok_or_else(|| fields.malformed(KIND, format!("unknown kind {kind}")))?,
                    unit_code: u16::from_be_bytes(fields.array(UNIT_CODE)?),
                    range_min: f64::from_be_bytes(fields.array(RANGE_MIN)?),
                    range_max: f64::from_be_bytes(fields.array(RANGE_MAX)?),
                    sample_period_us: u32::from_be_bytes(fields.array(SAMPLE_PERIOD_US)?),
                    warmup_delay_us: u32::from_be_bytes(fields.array(WARMUP_DELAY_US)?),
                    extensions: fields.extensions,
                })
            }
            TedsClass::UserTransducerName => {
                use code::name::*;
                TedsRecord::UserName(UserTransducerNameTeds {
                    manufacturer: fields.text(MANUFACTURER)?,
                    model_number: fields.text(MODEL)?,
                    user_name: fields.text(USER_NAME)?,
                    extensions: fields.extensions,
                })
            }
            TedsClass::Phy => {
                use code::phy::*;
                let [medium] = fields.array(MEDIUM)?;
                TedsRecord::Phy(PhyTeds {
                    medium: Medium::from_code(medium).ok_or_else(|| {
                        fields.malformed(MEDIUM, format!("unknown medium {medium}"))
                    })?,
                    max_payload_octets: u16::from_be_bytes(fields.array(MAX_PAYLOAD)?),
                    data_rate_bps: u32::from_be_bytes(fields.array(DATA_RATE_BPS)?),
                    extensions: fields.extensions,
                })
            }
        };
        record.validate()?;
        Ok(record)
    }
}

/// Known fields of a block indexed by type code, plus the uninterpreted rest.
struct FieldSet {
    class: TedsClass,
    known: Vec<(u8, Vec<u8>)>,
    extensions: Vec<TlvField>,
}

impl FieldSet {
    fn split(block: &TedsBlock) -> Result<Self, TedsError> {
        let codes = known_codes(block.class);
        let mut known: Vec<(u8, Vec<u8>)> = Vec::with_capacity(codes.len());
        let mut extensions = Vec::new();
        for field in &block.fields {
            if codes.contains(&field.type_code) {
                if known.iter().any(|(c, _)| *c == field.type_code) {
                    return Err(TedsError::MalformedField {
                        class: block.class,
                        type_code: field.type_code,
                        reason: "field appears more than once".into(),
                    });
                }
                known.push((field.type_code, field.value.clone()));
            } else {
                extensions.push(field.clone());
            }
        }
        Ok(Self {
            class: block.class,
            known,
            extensions,
        })
    }

    fn raw(&self, type_code: u8) -> Result<&[u8], TedsError> {
        self.known
            .iter()
            .find(|(c, _)| *c == type_code)
            .map(|(_, v)| v.as_slice())
            .ok_or(TedsError::MissingField {
                class: self.class,
                type_code,
            })
    }

    fn array<const N: usize>(&self, type_code: u8) -> Result<[u8; N], TedsError> {
        let raw = self.raw(type_code)?;
        raw.try_into().map_err(|_| {
            self.malformed(
                type_code,
                format!("expected {N} octets, found {}", raw.len()),
            )
        })
    }

    fn text(&self, type_code: u8) -> Result<String, TedsError> {
        let raw = self.raw(type_code)?;
        String::from_utf8(raw.to_vec())
            .map_err(|e| self.malformed(type_code, format!("invalid UTF-8: {e}")))
    }

    fn malformed(&self, type_code: u8, reason: String) -> TedsError {
        TedsError::MalformedField {
            class: self.class,
            type_code,
            reason,
        }
    }
}

/// Serializes a typed record into one TEDS block. Identical input always
/// produces identical octets.
pub fn encode_teds(record: &TedsRecord) -> Result<Vec<u8>, TedsError> {
    record.to_block()?.to_bytes()
}

pub fn decode_teds(bytes: &[u8]) -> Result<TedsRecord, TedsError> {
    TedsRecord::from_block(&TedsBlock::from_bytes(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teds::checksum;

    fn channel() -> TransducerChannelTeds {
        TransducerChannelTeds {
            channel_id: 0,
            channel_kind: ChannelKind::Sensor,
            unit_code: Unit::Celsius.code(),
            range_min: -40.0,
            range_max: 125.0,
            sample_period_us: 100_000,
            warmup_delay_us: 0,
            extensions: vec![],
        }
    }

    #[test]
    fn zero_uuid_meta_roundtrips() {
        let meta = TedsRecord::Meta(MetaTeds {
            uuid: Uuid::nil(),
            channel_count: 1,
            response_time_ms: 100,
            extensions: vec![],
        });
        let bytes = encode_teds(&meta).unwrap();
        assert_eq!(decode_teds(&bytes).unwrap(), meta);
        // 3 + 16 + 4 + 6 value octets, 6 octets of TLV headers
        assert_eq!(bytes.len(), 8 + 18 + 4 + 6);
    }

    #[test]
    fn empty_range_is_invalid() {
        let rec = TedsRecord::Channel(TransducerChannelTeds {
            range_min: 5.0,
            range_max: 5.0,
            ..channel()
        });
        assert!(matches!(
            encode_teds(&rec),
            Err(TedsError::InvalidRecord(_))
        ));
        let nan = TedsRecord::Channel(TransducerChannelTeds {
            range_min: f64::NAN,
            ..channel()
        });
        assert!(matches!(
            encode_teds(&nan),
            Err(TedsError::InvalidRecord(_))
        ));
    }

    #[test]
    fn phy_roundtrip_and_minimum_payload() {
        let phy = TedsRecord::Phy(PhyTeds {
            medium: Medium::Ble,
            max_payload_octets: 22,
            data_rate_bps: 1_000_000,
            extensions: vec![],
        });
        assert_eq!(decode_teds(&encode_teds(&phy).unwrap()).unwrap(), phy);
        let small = TedsRecord::Phy(PhyTeds {
            max_payload_octets: 21,
            ..Default::default()
        });
        assert!(matches!(
            encode_teds(&small),
            Err(TedsError::InvalidRecord(_))
        ));
    }

    #[test]
    fn flipped_last_octet_is_bad_checksum() {
        let bytes = encode_teds(&TedsRecord::Channel(channel())).unwrap();
        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() ^= 0xFF;
        assert!(matches!(
            decode_teds(&bad),
            Err(TedsError::BadChecksum { .. })
        ));
    }

    #[test]
    fn text_limit() {
        let name = TedsRecord::UserName(UserTransducerNameTeds {
            manufacturer: "x".repeat(256),
            ..Default::default()
        });
        assert!(matches!(
            encode_teds(&name),
            Err(TedsError::InvalidRecord(_))
        ));
        let ok = TedsRecord::UserName(UserTransducerNameTeds {
            manufacturer: "é".repeat(127),
            model_number: String::new(),
            user_name: "boiler room".into(),
            extensions: vec![],
        });
        assert_eq!(decode_teds(&encode_teds(&ok).unwrap()).unwrap(), ok);
    }

    fn sealed(class: TedsClass, fields: Vec<TlvField>) -> Vec<u8> {
        TedsBlock::new(class, fields).to_bytes().unwrap()
    }

    #[test]
    fn missing_and_malformed_fields() {
        let bytes = sealed(
            TedsClass::Phy,
            vec![TlvField::new(0x0A, [0]), TlvField::new(0x0B, [0, 64])],
        );
        assert_eq!(
            decode_teds(&bytes),
            Err(TedsError::MissingField {
                class: TedsClass::Phy,
                type_code: 0x0C
            })
        );
        let bytes = sealed(
            TedsClass::Phy,
            vec![
                TlvField::new(0x0A, [0]),
                TlvField::new(0x0B, [64]),
                TlvField::new(0x0C, [0, 0, 0, 1]),
            ],
        );
        assert!(matches!(
            decode_teds(&bytes),
            Err(TedsError::MalformedField {
                type_code: 0x0B,
                ..
            })
        ));
        let bytes = sealed(
            TedsClass::Phy,
            vec![
                TlvField::new(0x0A, [9]),
                TlvField::new(0x0B, [0, 64]),
                TlvField::new(0x0C, [0, 0, 0, 1]),
            ],
        );
        assert!(matches!(
            decode_teds(&bytes),
            Err(TedsError::MalformedField {
                type_code: 0x0A,
                ..
            })
        ));
    }

    #[test]
    fn duplicate_known_field_is_malformed() {
        let bytes = sealed(
            TedsClass::Phy,
            vec![
                TlvField::new(0x0A, [0]),
                TlvField::new(0x0A, [1]),
                TlvField::new(0x0B, [0, 64]),
                TlvField::new(0x0C, [0, 0, 0, 1]),
            ],
        );
        assert!(matches!(
            decode_teds(&bytes),
            Err(TedsError::MalformedField {
                type_code: 0x0A,
                ..
            })
        ));
    }

    #[test]
    fn unknown_fields_survive_roundtrip() {
        let bytes = sealed(
            TedsClass::Phy,
            vec![
                TlvField::new(0x0A, [1]),
                TlvField::new(0x0B, [0, 64]),
                TlvField::new(0x0C, [0, 0, 0, 9]),
                TlvField::new(0x77, b"vendor".to_vec()),
            ],
        );
        let rec = decode_teds(&bytes).unwrap();
        let TedsRecord::Phy(ref phy) = rec else {
            panic!()
        };
        assert_eq!(
            phy.extensions,
            vec![TlvField::new(0x77, b"vendor".to_vec())]
        );
        assert_eq!(encode_teds(&rec).unwrap(), bytes);
    }

    #[test]
    fn colliding_extension_rejected() {
        let rec = TedsRecord::Meta(MetaTeds {
            uuid: Uuid::nil(),
            channel_count: 1,
            response_time_ms: 1,
            extensions: vec![TlvField::new(0x04, [0])],
        });
        assert!(matches!(
            encode_teds(&rec),
            Err(TedsError::InvalidRecord(_))
        ));
    }

    #[test]
    fn encoding_is_deterministic() {
        let rec = TedsRecord::Channel(channel());
        assert_eq!(encode_teds(&rec).unwrap(), encode_teds(&rec).unwrap());
        let bytes = encode_teds(&rec).unwrap();
        let n = bytes.len();
        assert_eq!(
            u16::from_be_bytes([bytes[n - 2], bytes[n - 1]]),
            checksum(&bytes[..n - 2])
        );
    }

    #[test]
    fn unit_codes() {
        assert_eq!(Unit::from_code(5), Some(Unit::PercentRh));
        assert_eq!(Unit::from_code(9), None);
        assert_eq!(Unit::Ampere.code(), 8);
    }
}
