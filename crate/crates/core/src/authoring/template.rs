use serde::{Deserialize, Serialize};

use super::AuthoringError;
use crate::teds::TedsClass;

pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    Uuid,
    Uint,
    Float,
    Utf8,
    Enum,
}

impl SemanticType {
    pub const fn name(self) -> &'static str {
        match self {
            SemanticType::Uuid => "uuid",
            SemanticType::Uint => "uint",
            SemanticType::Float => "float",
            SemanticType::Utf8 => "utf8",
            SemanticType::Enum => "enum",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// Encoded length limit for text fields.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_octets: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub allowed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    pub semantic_type: SemanticType,
    pub constraints: Constraints,
    pub required: bool,
}

/// The e-form for one TEDS class: one descriptor per mandatory field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TedsTemplate {
    pub teds_class: TedsClass,
    pub descriptors: Vec<FieldDescriptor>,
    pub template_version: u32,
}

impl TedsTemplate {
    pub fn descriptor(&self, name: &str) -> Option<&FieldDescriptor> {
        self.descriptors.iter().find(|d| d.name == name)
    }

    pub fn for_class(class: TedsClass) -> Self {
        let descriptors = match class {
            TedsClass::Meta => vec![
                field("uuid", SemanticType::Uuid, Constraints::default()),
                uint("channel_count", 1, u16::MAX as u64),
                uint("response_time_ms", 1, u32::MAX as u64),
            ],
            TedsClass::TransducerChannel => vec![
                uint("channel_id", 0, u8::MAX as u64),
                choice("channel_kind", &["sensor", "actuator"]),
                uint("unit_code", 0, u16::MAX as u64),
                field("range_min", SemanticType::Float, Constraints::default()),
                field("range_max", SemanticType::Float, Constraints::default()),
                uint("sample_period_us", 1, u32::MAX as u64),
                uint("warmup_delay_us", 0, u32::MAX as u64),
            ],
            TedsClass::UserTransducerName => vec![
                text("manufacturer"),
                text("model_number"),
                text("user_name"),
            ],
            TedsClass::Phy => vec![
                choice("medium", &["sim_stream", "ble", "usb"]),
                uint("max_payload_octets", 22, u16::MAX as u64),
                uint("data_rate_bps", 0, u32::MAX as u64),
            ],
        };
        Self {
            teds_class: class,
            descriptors,
            template_version: TEMPLATE_VERSION,
        }
    }
}

fn field(name: &str, semantic_type: SemanticType, constraints: Constraints) -> FieldDescriptor {
    FieldDescriptor {
        name: name.into(),
        semantic_type,
        constraints,
        required: true,
    }
}

fn uint(name: &str, min: u64, max: u64) -> FieldDescriptor {
    field(
        name,
        SemanticType::Uint,
        Constraints {
            min: Some(min as f64),
            max: Some(max as f64),
            ..Default::default()
        },
    )
}

fn text(name: &str) -> FieldDescriptor {
    field(
        name,
        SemanticType::Utf8,
        Constraints {
            max_octets: Some(crate::teds::MAX_TEXT_OCTETS),
            ..Default::default()
        },
    )
}

fn choice(name: &str, allowed: &[&str]) -> FieldDescriptor {
    field(
        name,
        SemanticType::Enum,
        Constraints {
            allowed: allowed.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        },
    )
}

/// Template for the class with access code `code`. Reserved optional classes
/// are not implemented and report `UnknownClass`.
pub fn create_template(code: u8) -> Result<TedsTemplate, AuthoringError> {
    let class = TedsClass::from_code(code).map_err(|_| AuthoringError::UnknownClass(code))?;
    Ok(TedsTemplate::for_class(class))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(t: &TedsTemplate) -> Vec<&str> {
        t.descriptors.iter().map(|d| d.name.as_str()).collect()
    }

    #[test]
    fn mandatory_field_sets() {
        let meta = create_template(0x01).unwrap();
        assert_eq!(names(&meta), ["uuid", "channel_count", "response_time_ms"]);
        let phy = create_template(0x0D).unwrap();
        assert_eq!(
            names(&phy),
            ["medium", "max_payload_octets", "data_rate_bps"]
        );
        assert_eq!(create_template(0x03).unwrap().descriptors.len(), 7);
        assert_eq!(
            names(&create_template(0x0C).unwrap()),
            ["manufacturer", "model_number", "user_name"]
        );
        assert!(meta.descriptors.iter().all(|d| d.required));
    }

    #[test]
    fn reserved_and_unknown_classes() {
        assert_eq!(
            create_template(0x05),
            Err(AuthoringError::UnknownClass(0x05))
        );
        assert_eq!(
            create_template(0x20),
            Err(AuthoringError::UnknownClass(0x20))
        );
    }
}
