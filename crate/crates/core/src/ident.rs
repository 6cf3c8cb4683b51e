//! TIM identifiers are 16-octet UUIDs written as 32 hex digits without
//! hyphens on every wire format.

use uuid::Uuid;

/// Parses exactly 32 hex digits (either case).
pub fn parse_uuid_hex(s: &str) -> Option<Uuid> {
    if s.len() != 32 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    Uuid::try_parse(s).ok()
}

pub fn uuid_hex(uuid: &Uuid) -> String {
    uuid.simple().to_string()
}

/// Serde adapter writing a UUID as 32 lowercase hex digits.
pub mod serde_hex {
    use serde::{de, Deserialize, Deserializer, Serializer};
    use uuid::Uuid;

    pub fn serialize<S: Serializer>(uuid: &Uuid, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::uuid_hex(uuid))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Uuid, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_uuid_hex(&s)
            .ok_or_else(|| de::Error::custom(format!("expected 32 hex digits, got {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_form() {
        let u = Uuid::from_u128(0x0123456789abcdef0123456789abcdef);
        assert_eq!(uuid_hex(&u), "0123456789abcdef0123456789abcdef");
        assert_eq!(parse_uuid_hex("0123456789ABCDEF0123456789abcdef"), Some(u));
        assert_eq!(parse_uuid_hex("01234567-89ab-cdef-0123-456789abcdef"), None);
        assert_eq!(parse_uuid_hex("0123"), None);
    }
}
