//! Plug-and-play sensor onboarding: self-describing TEDS binaries, a
//! UUID-keyed directory for them, and a gateway that discovers TIMs,
//! configures their channels and streams their observations.

pub mod authoring;
pub mod bench;
pub mod fixtures;
pub mod ident;
pub mod ncap;
pub mod registry;
pub mod sim;
pub mod teds;
