use std::collections::{BTreeMap, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream, UdpSocket};
use tokio::sync::mpsc;
use tokio::time::{self, Instant, MissedTickBehavior};
use tokio_util::sync::CancellationToken;
use uuid::Uuid;

use super::waveform::{sample, SimChannel};
use super::SimError;
use crate::ident::uuid_hex;
use crate::ncap::AssociationPacket;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTimConfig {
    #[serde(with = "crate::ident::serde_hex")]
    pub uuid: Uuid,
    pub association_interval_ms: u64,
    pub channels: Vec<SimChannel>,
    /// Stop broadcasting once an NCAP has configured the TIM.
    pub stop_on_config: bool,
    /// After losing the NCAP, stay silent this long before broadcasting
    /// again.
    pub rebroadcast_after_ms: u64,
    /// Local address to bind; port 0 picks one.
    pub bind: String,
}

impl SimTimConfig {
    pub fn new(uuid: Uuid, channels: Vec<SimChannel>) -> Self {
        Self {
            uuid,
            association_interval_ms: 100,
            channels,
            stop_on_config: true,
            rebroadcast_after_ms: 1000,
            bind: "127.0.0.1:0".into(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.association_interval_ms == 0 {
            return Err(SimError::InvalidConfig(
                "association_interval_ms must be positive".into(),
            ));
        }
        let mut seen = HashSet::new();
        for c in &self.channels {
            if !seen.insert(c.channel_id) {
                return Err(SimError::InvalidConfig(format!(
                    "duplicate channel id {}",
                    c.channel_id
                )));
            }
            if c.native_period_us == 0 {
                return Err(SimError::InvalidConfig(format!(
                    "channel {}: native_period_us must be positive",
                    c.channel_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct Stats {
    packets: AtomicU64,
    samples: AtomicU64,
    connected: AtomicBool,
    configured: AtomicBool,
    connections: AtomicU64,
    lost_at: Mutex<Option<Instant>>,
}

/// A running simulated TIM. Dropping it stops the TIM.
pub struct SimTimHandle {
    pub uuid: Uuid,
    /// UDP source and TCP command endpoint (same port).
    pub local_addr: SocketAddr,
    stats: Arc<Stats>,
    cancel: CancellationToken,
}

impl SimTimHandle {
    pub fn packets_sent(&self) -> u64 {
        self.stats.packets.load(Ordering::Relaxed)
    }

    pub fn samples_sent(&self) -> u64 {
        self.stats.samples.load(Ordering::Relaxed)
    }

    /// Whether an NCAP is connected and has issued at least one command.
    pub fn is_configured(&self) -> bool {
        self.stats.connected.load(Ordering::Relaxed)
            && self.stats.configured.load(Ordering::Relaxed)
    }

    pub fn connections(&self) -> u64 {
        self.stats.connections.load(Ordering::Relaxed)
    }

    pub fn stop(&self) {
        self.cancel.cancel();
    }

    pub fn is_stopped(&self) -> bool {
        self.cancel.is_cancelled()
    }
}

impl Drop for SimTimHandle {
    fn drop(&mut self) {
        self.cancel.cancel();
    }
}

/// Binds a UDP socket and a TCP listener on one port.
async fn bind_pair(bind: &str) -> Result<(UdpSocket, TcpListener), SimError> {
    let mut last = String::new();
    for _ in 0..32 {
        let udp = UdpSocket::bind(bind)
            .await
            .map_err(|e| SimError::Bind(format!("{bind}: {e}")))?;
        let addr = udp
            .local_addr()
            .map_err(|e| SimError::Bind(e.to_string()))?;
        match TcpListener::bind(addr).await {
            Ok(tcp) => return Ok((udp, tcp)),
            Err(e) => last = format!("{addr}: {e}"),
        }
        if !bind.ends_with(":0") {
            break;
        }
    }
    Err(SimError::Bind(last))
}

/// Starts a TIM that announces itself to the NCAP association endpoint
/// `ncap`.
pub async fn run(config: SimTimConfig, ncap: &str) -> Result<SimTimHandle, SimError> {
    config.validate()?;
    let target = tokio::net::lookup_host(ncap)
        .await
        .map_err(|e| SimError::EndpointUnreachable(format!("{ncap}: {e}")))?
        .next()
        .ok_or_else(|| SimError::EndpointUnreachable(format!("{ncap}: no address")))?;
    let (udp, tcp) = bind_pair(&config.bind).await?;
    let local_addr = udp
        .local_addr()
        .map_err(|e| SimError::Bind(e.to_string()))?;
    udp.send_to(&AssociationPacket::new(config.uuid).encode(), target)
        .await
        .map_err(|e| SimError::EndpointUnreachable(format!("{target}: {e}")))?;
    let stats = Arc::new(Stats::default());
    stats.packets.fetch_add(1, Ordering::Relaxed);
    let cancel = CancellationToken::new();
    let config = Arc::new(config);
    let started = Instant::now();

    tokio::spawn(broadcast(
        udp,
        target,
        config.clone(),
        stats.clone(),
        cancel.clone(),
    ));
    tokio::spawn(accept_loop(
        tcp,
        config.clone(),
        stats.clone(),
        cancel.clone(),
        started,
    ));
    tracing::debug!(uuid = %uuid_hex(&config.uuid), %local_addr, "TIM started");
    Ok(SimTimHandle {
        uuid: config.uuid,
        local_addr,
        stats,
        cancel,
    })
}

pub async fn run_fleet(
    configs: Vec<SimTimConfig>,
    ncap: &str,
) -> Result<Vec<SimTimHandle>, SimError> {
    let mut handles = Vec::with_capacity(configs.len());
    for c in configs {
        handles.push(run(c, ncap).await?);
    }
    Ok(handles)
}

async fn broadcast(
    udp: UdpSocket,
    target: SocketAddr,
    config: Arc<SimTimConfig>,
    stats: Arc<Stats>,
    cancel: CancellationToken,
) {
    let packet = AssociationPacket::new(config.uuid).encode();
    let period = Duration::from_millis(config.association_interval_ms);
    let silence = Duration::from_millis(config.rebroadcast_after_ms);
    let mut ticks = time::interval_at(Instant::now() + period, period);
    loop {
        tokio::select! {
            _ = cancel.cancelled() => break,
            _ = ticks.tick() => {}
        }
        if config.stop_on_config {
            let configured =
                stats.connected.load(Ordering::Relaxed) && stats.configured.load(Ordering::Relaxed);
            let quiet = stats.lost_at.lock().is_some_and(|t| t.elapsed() < silence);
            if configured || quiet {
                continue;
            }
        }
        match udp.send_to(&packet, target).await {
            Ok(_) => {
                stats.packets.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => tracing::debug!(error = %e, "association send failed"),
        }
    }
}

async fn accept_loop(
    tcp: TcpListener,
    config: Arc<SimTimConfig>,
    stats: Arc<Stats>,
    cancel: CancellationToken,
    started: Instant,
) {
    let mut current: Option<CancellationToken> = None;
    loop {
        let accepted = tokio::select! {
            _ = cancel.cancelled() => break,
            a = tcp.accept() => a,
        };
        let Ok((stream, _)) = accepted else { continue };
        // a newer NCAP connection replaces the old one
        if let Some(old) = current.take() {
            old.cancel();
        }
        let token = cancel.child_token();
        current = Some(token.clone());
        let id = stats.connections.fetch_add(1, Ordering::Relaxed) + 1;
        let (config, stats, cancel) = (config.clone(), stats.clone(), cancel.clone());
        tokio::spawn(async move {
            stats.configured.store(false, Ordering::Relaxed);
            stats.connected.store(true, Ordering::Relaxed);
            serve_ncap(stream, &config, &stats, token.clone(), started).await;
            token.cancel();
            // only the newest connection reports loss
            if !cancel.is_cancelled() && stats.connections.load(Ordering::Relaxed) == id {
                stats.connected.store(false, Ordering::Relaxed);
                *stats.lost_at.lock() = Some(Instant::now());
            }
        });
    }
}

struct StreamState {
    enabled: bool,
    interval_us: u32,
    task: Option<CancellationToken>,
}

async fn serve_ncap(
    stream: TcpStream,
    config: &SimTimConfig,
    stats: &Arc<Stats>,
    token: CancellationToken,
    started: Instant,
) {
    let _ = stream.set_nodelay(true);
    let (read, mut write) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let writer_token = token.clone();
    let writer = tokio::spawn(async move {
        loop {
            let line = tokio::select! {
                _ = writer_token.cancelled() => break,
                l = rx.recv() => l,
            };
            let Some(line) = line else { break };
            if write.write_all(line.as_bytes()).await.is_err() {
                writer_token.cancel();
                break;
            }
        }
    });

    let mut streams: BTreeMap<u8, StreamState> = config
        .channels
        .iter()
        .map(|c| {
            let st = StreamState {
                enabled: false,
                interval_us: c.native_period_us,
                task: None,
            };
            (c.channel_id, st)
        })
        .collect();
    let mut reader = BufReader::new(read);
    let mut line = String::new();
    loop {
        line.clear();
        let mut limited = (&mut reader).take(257);
        tokio::select! {
            _ = token.cancelled() => break,
            r = limited.read_line(&mut line) => match r {
                Ok(n) if n > 0 && n <= 256 => {}
                _ => break,
            },
        }
        let reply = match handle_command(line.trim_end(), &mut streams) {
            Ok(Some(ch)) => {
                let st = streams.get_mut(&ch).expect("known channel");
                if let Some(old) = st.task.take() {
                    old.cancel();
                }
                if st.enabled {
                    let t = token.child_token();
                    st.task = Some(t.clone());
                    let channel = config
                        .channels
                        .iter()
                        .find(|c| c.channel_id == ch)
                        .expect("known")
                        .clone();
                    tokio::spawn(stream_channel(
                        channel,
                        st.interval_us,
                        tx.clone(),
                        stats.clone(),
                        t,
                        started,
                    ));
                }
                "ACK\n".to_string()
            }
            Ok(None) => "ACK\n".to_string(),
            Err(reason) => format!("ERR {reason}\n"),
        };
        stats.configured.store(true, Ordering::Relaxed);
        if tx.send(reply).is_err() {
            break;
        }
    }
    token.cancel();
    let _ = writer.await;
}

/// Applies one command. Returns the channel whose stream must restart.
fn handle_command(
    line: &str,
    streams: &mut BTreeMap<u8, StreamState>,
) -> Result<Option<u8>, String> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    let channel = |s: &str| -> Result<u8, String> {
        s.parse::<u8>()
            .ok()
            .filter(|c| streams.contains_key(c))
            .ok_or_else(|| format!("unknown channel {s}"))
    };
    match parts.as_slice() {
        ["CFG", ch, us] => {
            let ch = channel(ch)?;
            let us: u32 = us
                .parse()
                .ok()
                .filter(|&u| u > 0)
                .ok_or("interval must be a positive integer")?;
            let st = streams.get_mut(&ch).expect("checked");
            st.interval_us = us;
            Ok(Some(ch))
        }
        ["EN", ch, flag] => {
            let ch = channel(ch)?;
            let on = match *flag {
                "0" => false,
                "1" => true,
                _ => return Err("enable flag must be 0 or 1".into()),
            };
            streams.get_mut(&ch).expect("checked").enabled = on;
            Ok(Some(ch))
        }
        _ => Err(format!("unknown command {line:?}")),
    }
}

async fn stream_channel(
    channel: SimChannel,
    interval_us: u32,
    tx: mpsc::UnboundedSender<String>,
    stats: Arc<Stats>,
    token: CancellationToken,
    started: Instant,
) {
    let mut ticks = time::interval(Duration::from_micros(u64::from(interval_us)));
    ticks.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = token.cancelled() => break,
            // first tick fires at once
            _ = ticks.tick() => {}
        }
        let t_us = started.elapsed().as_micros() as u64;
        let v = sample(&channel.waveform, t_us);
        if tx
            .send(format!("SMP {} {:?}\n", channel.channel_id, v))
            .is_err()
        {
            break;
        }
        stats.samples.fetch_add(1, Ordering::Relaxed);
    }
}
