use serde::{Deserialize, Serialize};

use super::TedsError;

/// Largest value a single TLV can carry; the length field is one octet.
pub const MAX_TLV_VALUE: usize = u8::MAX as usize;

/// One type-length-value field. The meaning of `type_code` is scoped to the
/// TEDS class of the enclosing block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TlvField {
    pub type_code: u8,
    pub value: Vec<u8>,
}

impl TlvField {
    pub fn new(type_code: u8, value: impl Into<Vec<u8>>) -> Self {
        Self {
            type_code,
            value: value.into(),
        }
    }

    /// Serialized size in octets.
    pub fn encoded_len(&self) -> usize {
        2 + self.value.len()
    }
}

/// Appends `[type][len][value..]` to `out`.
pub fn write_tlv(field: &TlvField, out: &mut Vec<u8>) -> Result<(), TedsError> {
    let len = field.value.len();
    if len > MAX_TLV_VALUE {
        return Err(TedsError::OversizeValue { len });
    }
    out.reserve(2 + len);
    out.push(field.type_code);
    out.push(len as u8);
    out.extend_from_slice(&field.value);
    Ok(())
}

pub fn encode_tlv(field: &TlvField) -> Result<Vec<u8>, TedsError> {
    let mut out = Vec::with_capacity(field.encoded_len());
    write_tlv(field, &mut out)?;
    Ok(out)
}

/// Decodes one field starting at `offset`, returning it with the offset of
/// the octet that follows it.
pub fn decode_tlv(bytes: &[u8], offset: usize) -> Result<(TlvField, usize), TedsError> {
    let header_end = offset.checked_add(2).ok_or(TedsError::Truncated {
        offset,
        needed: 2,
        available: 0,
    })?;
    if header_end > bytes.len() {
        return Err(TedsError::Truncated {
            offset,
            needed: 2,
            available: bytes.len().saturating_sub(offset),
        });
    }
    let type_code = bytes[offset];
    let len = bytes[offset + 1] as usize;
    let end = header_end + len;
    if end > bytes.len() {
        return Err(TedsError::Truncated {
            offset,
            needed: 2 + len,
            available: bytes.len() - offset,
        });
    }
    let field = TlvField {
        type_code,
        value: bytes[header_end..end].to_vec(),
    };
    Ok((field, end))
}

/// Decodes a run of fields that must exactly tile `bytes`.
pub fn decode_tlv_run(bytes: &[u8]) -> Result<Vec<TlvField>, TedsError> {
    let mut fields = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let (field, next) = decode_tlv(bytes, offset)?;
        fields.push(field);
        offset = next;
    }
    Ok(fields)
}
