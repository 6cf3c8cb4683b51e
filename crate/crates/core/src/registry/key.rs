use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::ident::uuid_hex;
use crate::teds::{TedsClass, TedsRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error(
    "invalid class key {0:?}: expected two uppercase hex digits, optionally followed by :<channel>"
)]
pub struct KeyError(pub String);

/// Which TEDS of a TIM an entry holds: the class code, plus the channel id
/// for per-channel classes. Written as `01`, `03:00`, `0C`, `0D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassKey {
    pub class_code: u8,
    pub channel: Option<u8>,
}

impl ClassKey {
    pub fn for_class(class: TedsClass) -> Self {
        Self {
            class_code: class.code(),
            channel: None,
        }
    }

    pub fn channel(channel_id: u8) -> Self {
        Self {
            class_code: TedsClass::TransducerChannel.code(),
            channel: Some(channel_id),
        }
    }

    pub fn for_record(record: &TedsRecord) -> Self {
        match record {
            TedsRecord::Channel(ch) => Self::channel(ch.channel_id),
            other => Self::for_class(other.class()),
        }
    }

    /// Whether `record` is what this key is supposed to hold.
    pub fn matches(&self, record: &TedsRecord) -> bool {
        *self == Self::for_record(record)
    }

    /// Filesystem-safe spelling (`03_00`).
    pub fn file_stem(&self) -> String {
        self.to_string().replace(':', "_")
    }
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02X}", self.class_code)?;
        if let Some(ch) = self.channel {
            write!(f, ":{ch:02}")?;
        }
        Ok(())
    }
}

impl FromStr for ClassKey {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || KeyError(s.to_string());
        let (class, channel) = match s.split_once(':') {
            Some((c, ch)) => (c, Some(ch)),
            None => (s, None),
        };
        if class.len() != 2
            || !class
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b))
        {
            return Err(err());
        }
        let class_code = u8::from_str_radix(class, 16).map_err(|_| err())?;
        let channel = match channel {
            None => None,
            Some(ch) => {
                if ch.is_empty() || ch.len() > 3 || !ch.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(err());
                }
                Some(ch.parse::<u8>().map_err(|_| err())?)
            }
        };
        Ok(Self {
            class_code,
            channel,
        })
    }
}

impl Serialize for ClassKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClassKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectoryKey {
    pub uuid: Uuid,
    pub class_key: ClassKey,
}

impl DirectoryKey {
    pub fn new(uuid: Uuid, class_key: ClassKey) -> Self {
        Self { uuid, class_key }
    }
}

impl fmt::Display for DirectoryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", uuid_hex(&self.uuid), self.class_key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        assert_eq!(ClassKey::for_class(TedsClass::Meta).to_string(), "01");
        assert_eq!(ClassKey::channel(0).to_string(), "03:00");
        assert_eq!(ClassKey::channel(200).to_string(), "03:200");
        assert_eq!(
            ClassKey::for_class(TedsClass::UserTransducerName).to_string(),
            "0C"
        );
        assert_eq!(ClassKey::for_class(TedsClass::Phy).to_string(), "0D");
    }

    #[test]
    fn parsing() {
        assert_eq!("03:0".parse::<ClassKey>().unwrap(), ClassKey::channel(0));
        assert_eq!("03:007".parse::<ClassKey>().unwrap(), ClassKey::channel(7));
        assert_eq!(
            "0D".parse::<ClassKey>().unwrap(),
            ClassKey::for_class(TedsClass::Phy)
        );
        for bad in [
            "0d", "1", "001", "03:", "03:1000", "03:256", "03:-1", "GG", "03:x",
        ] {
            assert!(bad.parse::<ClassKey>().is_err(), "{bad}");
        }
    }
}
