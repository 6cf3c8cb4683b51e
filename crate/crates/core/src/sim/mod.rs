//! Simulated TIMs. Each one broadcasts association packets over UDP and
//! accepts the NCAP's command stream over TCP on the same local port, then
//! streams samples generated from synthetic waveforms.

mod scenario;
mod tim;
mod waveform;

use thiserror::Error;

pub use scenario::{parse_scenario, scenario_from_file};
pub use tim::{run, run_fleet, SimTimConfig, SimTimHandle};
pub use waveform::{sample, SimChannel, Waveform, DEFAULT_PERIOD_US};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid TIM configuration: {0}")]
    InvalidConfig(String),
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("cannot bind TIM sockets: {0}")]
    Bind(String),
    #[error("scenario parse error: {0}")]
    ParseError(String),
}
