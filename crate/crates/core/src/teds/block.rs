use super::tlv::{decode_tlv_run, write_tlv, TlvField};
use super::{TedsClass, TedsError};

pub const TEDS_VERSION: u8 = 0x01;

/// Octets a block spends outside its TLV fields: length, class, version,
/// checksum.
pub const BLOCK_OVERHEAD: usize = 4 + 1 + 1 + 2;

/// One's-complement style 16-bit octet sum.
pub fn checksum(bytes: &[u8]) -> u16 {
    let sum = bytes
        .iter()
        .fold(0u16, |acc, &b| acc.wrapping_add(u16::from(b)));
    0xFFFF - sum
}

/// Untyped TEDS block: class, version and the ordered field list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TedsBlock {
    pub class: TedsClass,
    pub version: u8,
    pub fields: Vec<TlvField>,
}

impl TedsBlock {
    pub fn new(class: TedsClass, fields: Vec<TlvField>) -> Self {
        Self {
            class,
            version: TEDS_VERSION,
            fields,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TedsError> {
        let body: usize = self.fields.iter().map(TlvField::encoded_len).sum();
        let mut out = Vec::with_capacity(BLOCK_OVERHEAD + body);
        let declared = u32::try_from(body + 4)
            .map_err(|_| TedsError::BadLength(format!("block body of {body} octets")))?;
        out.extend_from_slice(&declared.to_be_bytes());
        out.push(self.class.code());
        out.push(self.version);
        for field in &self.fields {
            write_tlv(field, &mut out)?;
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_be_bytes());
        Ok(out)
    }

    /// Parses and integrity-checks one serialized block. Checks run in order:
    /// length, checksum, class, version, field tiling.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TedsError> {
        if bytes.len() < BLOCK_OVERHEAD {
            return Err(TedsError::BadLength(format!(
                "{} octets is shorter than the {BLOCK_OVERHEAD}-octet minimum block",
                bytes.len()
            )));
        }
        let declared = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
        let actual = bytes.len() - 4;
        if declared != actual {
            return Err(TedsError::BadLength(format!(
                "length field says {declared} octets follow, found {actual}"
            )));
        }
        let (covered, tail) = bytes.split_at(bytes.len() - 2);
        let stored = u16::from_be_bytes([tail[0], tail[1]]);
        let computed = checksum(covered);
        if stored != computed {
            return Err(TedsError::BadChecksum { computed, stored });
        }
        let class = TedsClass::from_code(bytes[4])?;
        let version = bytes[5];
        if version != TEDS_VERSION {
            return Err(TedsError::UnsupportedVersion(version));
        }
        let fields = decode_tlv_run(&covered[6..]).map_err(|e| match e {
            TedsError::Truncated {
                offset,
                needed,
                available,
            } => TedsError::BadLength(format!(
                "field at body offset {offset} needs {needed} octets, {available} remain"
            )),
            other => other,
        })?;
        Ok(Self {
            class,
            version,
            fields,
        })
    }
}
