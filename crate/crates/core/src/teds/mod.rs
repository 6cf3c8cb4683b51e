//! Transducer Electronic Data Sheets: the TLV field codec, the framed block
//! layout, the four mandatory typed records and cross-record validation.
//!
//! Serialized block layout (a `.teds` file is exactly one block):
//!
//! ```text
//! +----------+-------+---------+--------------------+----------+
//! | len: u32 | class | version | TLV fields ...     | checksum |
//! |   (BE)   |  u8   |   u8    |                    | u16 (BE) |
//! +----------+-------+---------+--------------------+----------+
//! ```
//!
//! `len` counts every octet after itself, checksum included. The checksum is
//! `0xFFFF - (sum of all preceding octets mod 0x10000)`.

mod block;
mod record;
mod tlv;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use block::{checksum, TedsBlock, BLOCK_OVERHEAD, TEDS_VERSION};
pub use record::{
    decode_teds, encode_teds, ChannelKind, Medium, MetaTeds, PhyTeds, TedsRecord,
    TransducerChannelTeds, Unit, UserTransducerNameTeds, MAX_TEXT_OCTETS,
};
pub use tlv::{decode_tlv, decode_tlv_run, encode_tlv, write_tlv, TlvField, MAX_TLV_VALUE};
pub use validate::{validate_teds_set, ValidationReport, Violation};

/// The implemented TEDS classes. Access codes follow IEEE 1451.0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TedsClass {
    Meta,
    TransducerChannel,
    UserTransducerName,
    Phy,
}

/// Optional classes whose codes are reserved but which are not implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReservedClass {
    Calibration,
    FrequencyResponse,
    TransferFunction,
}

impl ReservedClass {
    pub const fn code(self) -> u8 {
        match self {
            ReservedClass::Calibration => 0x05,
            ReservedClass::FrequencyResponse => 0x08,
            ReservedClass::TransferFunction => 0x09,
        }
    }
}

impl TedsClass {
    pub const ALL: [TedsClass; 4] = [
        TedsClass::Meta,
        TedsClass::TransducerChannel,
        TedsClass::UserTransducerName,
        TedsClass::Phy,
    ];

    pub const fn code(self) -> u8 {
        match self {
            TedsClass::Meta => 0x01,
            TedsClass::TransducerChannel => 0x03,
            TedsClass::UserTransducerName => 0x0C,
            TedsClass::Phy => 0x0D,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, TedsError> {
        match code {
            0x01 => Ok(TedsClass::Meta),
            0x03 => Ok(TedsClass::TransducerChannel),
            0x0C => Ok(TedsClass::UserTransducerName),
            0x0D => Ok(TedsClass::Phy),
            other => Err(TedsError::UnknownClass(other)),
        }
    }

    /// Short lowercase name used on the command line and in URLs.
    pub const fn name(self) -> &'static str {
        match self {
            TedsClass::Meta => "meta",
            TedsClass::TransducerChannel => "channel",
            TedsClass::UserTransducerName => "name",
            TedsClass::Phy => "phy",
        }
    }
}

impl fmt::Display for TedsClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TedsClass::Meta => "Meta",
            TedsClass::TransducerChannel => "TransducerChannel",
            TedsClass::UserTransducerName => "UserTransducerName",
            TedsClass::Phy => "Phy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TedsError {
    #[error("TLV value of {len} octets exceeds the 255-octet limit")]
    OversizeValue { len: usize },
    #[error("truncated TLV at offset {offset}: need {needed} octets, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("bad checksum: computed {computed:#06x}, stored {stored:#06x}")]
    BadChecksum { computed: u16, stored: u16 },
    #[error("bad length: {0}")]
    BadLength(String),
    #[error("unknown TEDS class code {0:#04x}")]
    UnknownClass(u8),
    #[error("unsupported TEDS block version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("{class} TEDS is missing mandatory field {type_code:#04x}")]
    MissingField { class: TedsClass, type_code: u8 },
    #[error("{class} TEDS field {type_code:#04x} is malformed: {reason}")]
    MalformedField {
        class: TedsClass,
        type_code: u8,
        reason: String,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}
