use futures::future::try_join_all;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::description::{generate_teds, TimDescription};
use super::AuthoringError;
use crate::ident::uuid_hex;
use crate::registry::{ClassKey, DirectoryKey, RegistryClient, RegistryError};
use crate::teds::{decode_teds, TedsRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiptEntry {
    pub class_key: ClassKey,
    pub version: u64,
}

/// What the directory stored for one registration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    #[serde(with = "crate::ident::serde_hex")]
    pub uuid: Uuid,
    pub entries: Vec<ReceiptEntry>,
}

impl Receipt {
    pub fn keys(&self) -> Vec<ClassKey> {
        self.entries.iter().map(|e| e.class_key).collect()
    }
}

fn registry_failure(key: &DirectoryKey, e: RegistryError) -> AuthoringError {
    match e {
        RegistryError::Unreachable { .. } => AuthoringError::RegistryUnreachable(e.to_string()),
        other => AuthoringError::StoreRejected {
            key: key.to_string(),
            reason: other.to_string(),
        },
    }
}

/// Generates the TIM's TEDS set and stores each binary under
/// `(uuid, class_key)`. Registering again overwrites and bumps versions.
pub async fn register_device(
    desc: &TimDescription,
    registry: &RegistryClient,
) -> Result<Receipt, AuthoringError> {
    let generated = generate_teds(desc)?;
    let puts = generated.iter().map(|g| {
        let key = DirectoryKey::new(desc.uuid, g.class_key);
        async move {
            let version = registry
                .put(key, &g.binary)
                .await
                .map_err(|e| registry_failure(&key, e))?;
            Ok::<_, AuthoringError>(ReceiptEntry {
                class_key: g.class_key,
                version,
            })
        }
    });
    let entries = try_join_all(puts).await?;
    Ok(Receipt {
        uuid: desc.uuid,
        entries,
    })
}

/// Rebuilds the stored description of a TIM from its directory binaries,
/// which are the system of record.
pub async fn fetch_description(
    uuid: Uuid,
    registry: &RegistryClient,
) -> Result<TimDescription, AuthoringError> {
    let keys = registry
        .list(uuid)
        .await
        .map_err(|e| registry_failure(&DirectoryKey::new(uuid, ClassKey::channel(0)), e))?;
    if keys.is_empty() {
        return Err(AuthoringError::UnknownDevice(uuid_hex(&uuid)));
    }
    let fetches = keys.iter().map(|&k| {
        let key = DirectoryKey::new(uuid, k);
        async move {
            let bytes = registry
                .get(key)
                .await
                .map_err(|e| registry_failure(&key, e))?;
            Ok::<_, AuthoringError>(decode_teds(&bytes)?)
        }
    });
    let mut meta = None;
    let mut channels = Vec::new();
    let mut name = None;
    let mut phy = None;
    for record in try_join_all(fetches).await? {
        match record {
            TedsRecord::Meta(m) => meta = Some(m),
            TedsRecord::Channel(c) => channels.push(c),
            TedsRecord::UserName(n) => name = Some(n),
            TedsRecord::Phy(p) => phy = Some(p),
        }
    }
    let missing = |what: &str| {
        AuthoringError::UnknownDevice(format!("{} has no {what} TEDS", uuid_hex(&uuid)))
    };
    let meta = meta.ok_or_else(|| missing("meta"))?;
    let name = name.ok_or_else(|| missing("name"))?;
    let phy = phy.ok_or_else(|| missing("phy"))?;
    Ok(TimDescription::from_records(&meta, &channels, &name, &phy))
}
