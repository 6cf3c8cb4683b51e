//! The TEDS service: e-form templates per class, the XML device
//! description, TEDS generation and one-time registration into the
//! directory.

mod description;
mod register;
mod template;
mod xml;

use thiserror::Error;

pub use description::{generate_teds, GeneratedTeds, TimDescription};
pub use register::{fetch_description, register_device, Receipt, ReceiptEntry};
pub use template::{create_template, Constraints, FieldDescriptor, SemanticType, TedsTemplate};
pub use xml::{parse_description, render_description, render_template};

use crate::registry::RegistryError;
use crate::teds::TedsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuthoringError {
    #[error("unknown or unimplemented TEDS class code {0:#04x}")]
    UnknownClass(u8),
    #[error("schema error at {path}: {reason}")]
    SchemaError { path: String, reason: String },
    #[error("constraint violated at {field}: {reason}")]
    ConstraintViolation { field: String, reason: String },
    #[error(transparent)]
    InvalidRecord(#[from] TedsError),
    #[error("registry unreachable: {0}")]
    RegistryUnreachable(String),
    #[error("no TEDS registered for {0}")]
    UnknownDevice(String),
    #[error("registry rejected {key}: {reason}")]
    StoreRejected { key: String, reason: String },
}

impl AuthoringError {
    pub(crate) fn schema(path: impl Into<String>, reason: impl Into<String>) -> Self {
        AuthoringError::SchemaError {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn constraint(field: impl Into<String>, reason: impl Into<String>) -> Self {
        AuthoringError::ConstraintViolation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<RegistryError> for AuthoringError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Unreachable { .. } => AuthoringError::RegistryUnreachable(e.to_string()),
            other => AuthoringError::StoreRejected {
                key: String::new(),
                reason: other.to_string(),
            },
        }
    }
}
