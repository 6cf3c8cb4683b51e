//! UUID-keyed directory of encoded TEDS binaries, served over a small
//! line-oriented protocol and persisted in an append-only log.

mod client;
mod key;
pub mod protocol;
mod server;
mod store;

pub use client::{RegistryClient, RegistryError};
pub use key::{ClassKey, DirectoryKey, KeyError};
pub use server::{serve, spawn, RegistryHandle, ServerOptions};
pub use store::{Directory, DirectoryEntry, StoreError};
