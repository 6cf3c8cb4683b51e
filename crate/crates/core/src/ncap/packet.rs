//! The 22-octet association packet a TIM broadcasts until it is configured:
//!
//! ```text
//! 0x14 0x51 | version=0x01 | type=0x01 | uuid (16) | checksum (2, BE)
//! ```
//!
//! The checksum uses the TEDS algorithm over the first 20 octets.

use thiserror::Error;
use uuid::Uuid;

use crate::teds::checksum;

pub const ASSOC_MAGIC: [u8; 2] = [0x14, 0x51];
pub const ASSOC_VERSION: u8 = 0x01;
pub const ASSOC_TYPE: u8 = 0x01;
pub const ASSOC_LEN: usize = 22;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("association packet truncated: {0} of {ASSOC_LEN} octets")]
    Truncated(usize),
    #[error("association packet has {0} octets, expected {ASSOC_LEN}")]
    Oversize(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported association packet version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("unsupported packet type {0:#04x}")]
    UnsupportedType(u8),
    #[error("bad association checksum: computed {computed:#06x}, stored {stored:#06x}")]
    BadChecksum { computed: u16, stored: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssociationPacket {
    pub uuid: Uuid,
}

impl AssociationPacket {
    pub fn new(uuid: Uuid) -> Self {
        Self { uuid }
    }

    pub fn encode(&self) -> [u8; ASSOC_LEN] {
        let mut out = [0u8; ASSOC_LEN];
        out[..2].copy_from_slice(&ASSOC_MAGIC);
        out[2] = ASSOC_VERSION;
        out[3] = ASSOC_TYPE;
        out[4..20].copy_from_slice(self.uuid.as_bytes());
        let sum = checksum(&out[..20]);
        out[20..].copy_from_slice(&sum.to_be_bytes());
        out
    }
}

pub fn decode_packet(bytes: &[u8]) -> Result<AssociationPacket, PacketError> {
    if bytes.len() < ASSOC_LEN {
        return Err(PacketError::Truncated(bytes.len()));
    }
    if bytes.len() > ASSOC_LEN {
        return Err(PacketError::Oversize(bytes.len()));
    }
    let magic = [bytes[0], bytes[1]];
    if magic != ASSOC_MAGIC {
        return Err(PacketError::BadMagic(magic));
    }
    if bytes[2] != ASSOC_VERSION {
        return Err(PacketError::UnsupportedVersion(bytes[2]));
    }
    if bytes[3] != ASSOC_TYPE {
        return Err(PacketError::UnsupportedType(bytes[3]));
    }
    let stored = u16::from_be_bytes([bytes[20], bytes[21]]);
    let computed = checksum(&bytes[..20]);
    if stored != computed {
        return Err(PacketError::BadChecksum { computed, stored });
    }
    let uuid = Uuid::from_bytes(bytes[4..20].try_into().expect("16 octets"));
    Ok(AssociationPacket { uuid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn well_formed_packet() {
        let uuid = Uuid::from_u128(0x0102_0304_0506_0708_090a_0b0c_0d0e_0f10);
        let bytes = AssociationPacket::new(uuid).encode();
        assert_eq!(&bytes[..4], &[0x14, 0x51, 0x01, 0x01]);
        // octet sum of header + uuid is 0x67 + 0x88 = 0xEF
        assert_eq!(&bytes[20..], &[0xFF, 0x10]);
        assert_eq!(decode_packet(&bytes).unwrap().uuid, uuid);
    }

    #[test]
    fn rejections() {
        let good = AssociationPacket::new(Uuid::from_u128(99)).encode();
        assert_eq!(decode_packet(&good[..21]), Err(PacketError::Truncated(21)));
        let mut long = good.to_vec();
        long.push(0);
        assert_eq!(decode_packet(&long), Err(PacketError::Oversize(23)));

        let mut flipped = good;
        flipped[10] ^= 0x01;
        assert!(matches!(
            decode_packet(&flipped),
            Err(PacketError::BadChecksum { .. })
        ));

        let mut magic = good;
        magic[0] = 0x15;
        assert!(matches!(
            decode_packet(&magic),
            Err(PacketError::BadMagic(_))
        ));

        let mut version = good;
        version[2] = 2;
        assert_eq!(
            decode_packet(&version),
            Err(PacketError::UnsupportedVersion(2))
        );

        let mut kind = good;
        kind[3] = 7;
        assert_eq!(decode_packet(&kind), Err(PacketError::UnsupportedType(7)));
    }

    proptest! {
        #[test]
        fn any_uuid_roundtrips(raw in any::<u128>()) {
            let p = AssociationPacket::new(Uuid::from_u128(raw));
            prop_assert_eq!(decode_packet(&p.encode()).unwrap(), p);
        }

        #[test]
        fn any_uuid_octet_change_is_caught(raw in any::<u128>(), idx in 4usize..20, delta in 1u8..=255) {
            let mut bytes = AssociationPacket::new(Uuid::from_u128(raw)).encode();
            bytes[idx] = bytes[idx].wrapping_add(delta);
            let rejected = matches!(decode_packet(&bytes), Err(PacketError::BadChecksum { .. }));
            prop_assert!(rejected);
        }
    }
}
