//! The command stream to one configured TIM, and the per-channel data plane
//! fed by its samples.
//!
//! Commands are `CFG <ch> <interval_us>` and `EN <ch> <0|1>`, each answered
//! by `ACK` (or `ERR <reason>`) in order. The TIM pushes `SMP <ch> <value>`
//! lines at any time.

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::sync::{Arc, Weak};
use std::time::Duration;

use parking_lot::Mutex;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio::time::{self, Instant, MissedTickBehavior};
use tokio_util::sync::CancellationToken;
use uuid::Uuid;

use super::cache::DecodedTeds;
use super::channel::{ChannelModel, ChannelModelState, ChannelRuntimeState, ModelInput};
use super::pubsub::{topic_for, Broker, SampleEvent, Timebase};
use super::NcapError;
use crate::teds::TransducerChannelTeds;

const MAX_LINE: usize = 256;

type Reply = oneshot::Sender<Result<(), String>>;

struct ChannelSlot {
    state: ChannelRuntimeState,
    model: ChannelModelState,
    teds: TransducerChannelTeds,
    ticker: Option<CancellationToken>,
}

pub(crate) struct Session {
    me: Weak<Session>,
    pub uuid: Uuid,
    pub addr: SocketAddr,
    writer: tokio::sync::Mutex<OwnedWriteHalf>,
    pending: Mutex<VecDeque<Reply>>,
    channels: Mutex<BTreeMap<u8, ChannelSlot>>,
    response_timeout: Duration,
    broker: Broker,
    timebase: Timebase,
    pub cancel: CancellationToken,
}

impl Session {
    /// Connects to the TIM's command endpoint and configures every channel
    /// from its TEDS: enabled, sample-and-hold, sampling at the declared
    /// period.
    pub async fn open(
        uuid: Uuid,
        addr: SocketAddr,
        teds: &DecodedTeds,
        broker: Broker,
        timebase: Timebase,
        parent: &CancellationToken,
    ) -> Result<Arc<Self>, NcapError> {
        let response_timeout = Duration::from_millis(u64::from(teds.meta.response_time_ms.max(1)));
        let unresponsive = |reason: String| NcapError::TimUnresponsive { uuid, reason };
        let stream = time::timeout(response_timeout, TcpStream::connect(addr))
            .await
            .map_err(|_| unresponsive(format!("connect to {addr} timed out")))?
            .map_err(|e| unresponsive(format!("connect to {addr}: {e}")))?;
        let _ = stream.set_nodelay(true);
        let (read, write) = stream.into_split();
        let channels = teds
            .channels
            .iter()
            .map(|c| {
                let slot = ChannelSlot {
                    state: ChannelRuntimeState {
                        uuid,
                        channel_id: c.channel_id,
                        enabled: true,
                        sampling_interval_us: c.sample_period_us,
                        channel_model: ChannelModel::SampleAndHold,
                        deadband: 0.0,
                    },
                    model: ChannelModelState::default(),
                    teds: c.clone(),
                    ticker: None,
                };
                (c.channel_id, slot)
            })
            .collect();
        let session = Arc::new_cyclic(|me| Session {
            me: me.clone(),
            uuid,
            addr,
            writer: tokio::sync::Mutex::new(write),
            pending: Mutex::default(),
            channels: Mutex::new(channels),
            response_timeout,
            broker,
            timebase,
            cancel: parent.child_token(),
        });
        tokio::spawn(session.clone().read_loop(BufReader::new(read)));

        let configure = async {
            for c in &teds.channels {
                session
                    .command(format!("CFG {} {}", c.channel_id, c.sample_period_us))
                    .await?;
                session.command(format!("EN {} 1", c.channel_id)).await?;
            }
            Ok(())
        };
        if let Err(e) = configure.await {
            session.cancel.cancel();
            return Err(e);
        }
        {
            let mut channels = session.channels.lock();
            for slot in channels.values_mut() {
                session.restart_ticker(slot);
            }
        }
        Ok(session)
    }

    pub fn is_alive(&self) -> bool {
        !self.cancel.is_cancelled()
    }

    pub fn states(&self) -> Vec<ChannelRuntimeState> {
        self.channels
            .lock()
            .values()
            .map(|s| s.state.clone())
            .collect()
    }

    fn state_of(&self, channel_id: u8) -> Result<ChannelRuntimeState, NcapError> {
        self.channels
            .lock()
            .get(&channel_id)
            .map(|s| s.state.clone())
            .ok_or(NcapError::UnknownChannel {
                uuid: self.uuid,
                channel_id,
            })
    }

    pub async fn set_enabled(
        &self,
        channel_id: u8,
        enabled: bool,
    ) -> Result<ChannelRuntimeState, NcapError> {
        self.state_of(channel_id)?;
        if !enabled {
            // stop publishing before the TIM confirms
            self.update(channel_id, |s| s.enabled = false);
        }
        self.command(format!("EN {} {}", channel_id, u8::from(enabled)))
            .await?;
        Ok(self.update(channel_id, |s| s.enabled = enabled))
    }

    pub async fn set_interval(
        &self,
        channel_id: u8,
        interval_us: u32,
    ) -> Result<ChannelRuntimeState, NcapError> {
        if interval_us == 0 {
            return Err(NcapError::InvalidInterval);
        }
        self.state_of(channel_id)?;
        self.command(format!("CFG {channel_id} {interval_us}"))
            .await?;
        Ok(self.update(channel_id, |s| s.sampling_interval_us = interval_us))
    }

    pub fn set_model(
        &self,
        channel_id: u8,
        model: ChannelModel,
        deadband: Option<f64>,
    ) -> Result<ChannelRuntimeState, NcapError> {
        if deadband.is_some_and(|d| !d.is_finite() || d < 0.0) {
            return Err(NcapError::InvalidDeadband);
        }
        self.state_of(channel_id)?;
        Ok(self.update(channel_id, |s| {
            s.channel_model = model;
            if let Some(d) = deadband {
                s.deadband = d;
            }
        }))
    }

    /// Applies `f` to a channel's state and brings its model and ticker in
    /// line with the result.
    fn update(
        &self,
        channel_id: u8,
        f: impl FnOnce(&mut ChannelRuntimeState),
    ) -> ChannelRuntimeState {
        let mut channels = self.channels.lock();
        let slot = channels
            .get_mut(&channel_id)
            .expect("channel checked by caller");
        let before = slot.state.clone();
        f(&mut slot.state);
        if !slot.state.enabled {
            slot.model.reset();
        } else if slot.state.channel_model != before.channel_model {
            slot.model.last_emitted = None;
        }
        if slot.state != before {
            self.restart_ticker(slot);
        }
        slot.state.clone()
    }

    fn restart_ticker(&self, slot: &mut ChannelSlot) {
        if let Some(old) = slot.ticker.take() {
            old.cancel();
        }
        let s = &slot.state;
        if !s.enabled || s.channel_model != ChannelModel::SampleAndHold || !self.is_alive() {
            return;
        }
        let token = self.cancel.child_token();
        slot.ticker = Some(token.clone());
        let period = Duration::from_micros(u64::from(s.sampling_interval_us));
        let channel_id = s.channel_id;
        let session = self.me.clone();
        tokio::spawn(async move {
            let mut ticks = time::interval_at(Instant::now() + period, period);
            ticks.set_missed_tick_behavior(MissedTickBehavior::Delay);
            loop {
                tokio::select! {
                    _ = token.cancelled() => break,
                    _ = ticks.tick() => {}
                }
                let Some(session) = session.upgrade() else {
                    break;
                };
                let mut channels = session.channels.lock();
                // re-checked under the lock: a restart may have raced this tick
                if token.is_cancelled() {
                    break;
                }
                if let Some(slot) = channels.get_mut(&channel_id) {
                    session.feed(slot, ModelInput::Tick);
                }
            }
        });
    }

    fn feed(&self, slot: &mut ChannelSlot, input: ModelInput) {
        if !slot.state.enabled {
            return;
        }
        let Some(value) = slot
            .model
            .apply(slot.state.channel_model, slot.state.deadband, input)
        else {
            return;
        };
        let event = SampleEvent {
            topic: topic_for(&self.uuid, slot.state.channel_id),
            uuid: self.uuid,
            channel_id: slot.state.channel_id,
            timestamp_us: self.timebase.now_us(),
            value,
            unit_code: slot.teds.unit_code,
            out_of_range: !slot.teds.in_range(value),
        };
        self.broker.publish(&event);
    }

    async fn command(&self, line: String) -> Result<(), NcapError> {
        let unresponsive = |reason: String| NcapError::TimUnresponsive {
            uuid: self.uuid,
            reason,
        };
        let reply = {
            let mut w = self.writer.lock().await;
            let (tx, rx) = oneshot::channel();
            self.pending.lock().push_back(tx);
            let mut msg = line.clone().into_bytes();
            msg.push(b'\n');
            if let Err(e) = w.write_all(&msg).await {
                self.cancel.cancel();
                return Err(unresponsive(format!("{line}: {e}")));
            }
            rx
        };
        match time::timeout(self.response_timeout, reply).await {
            Ok(Ok(Ok(()))) => Ok(()),
            Ok(Ok(Err(reason))) => Err(unresponsive(format!("{line}: TIM answered ERR {reason}"))),
            Ok(Err(_)) => Err(unresponsive(format!("{line}: connection closed"))),
            Err(_) => {
                self.cancel.cancel();
                Err(unresponsive(format!(
                    "{line}: no ACK within {} ms",
                    self.response_timeout.as_millis()
                )))
            }
        }
    }

    async fn read_loop(self: Arc<Self>, mut reader: BufReader<tokio::net::tcp::OwnedReadHalf>) {
        let mut line = String::new();
        loop {
            line.clear();
            let mut limited = (&mut reader).take(MAX_LINE as u64 + 1);
            let read = tokio::select! {
                _ = self.cancel.cancelled() => break,
                r = limited.read_line(&mut line) => r,
            };
            match read {
                Ok(0) | Err(_) => break,
                Ok(n) if n > MAX_LINE => {
                    tracing::warn!(uuid = %self.uuid, "overlong line from TIM");
                    break;
                }
                Ok(_) => self.handle_line(line.trim_end()),
            }
        }
        self.cancel.cancel();
        self.pending.lock().clear();
    }

    fn handle_line(&self, line: &str) {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("ACK") => {
                if let Some(tx) = self.pending.lock().pop_front() {
                    let _ = tx.send(Ok(()));
                }
            }
            Some("ERR") => {
                if let Some(tx) = self.pending.lock().pop_front() {
                    let _ = tx.send(Err(parts.collect::<Vec<_>>().join(" ")));
                }
            }
            Some("SMP") => {
                let parsed = (|| {
                    let ch: u8 = parts.next()?.parse().ok()?;
                    let v: f64 = parts.next()?.parse().ok()?;
                    parts.next().is_none().then_some((ch, v))
                })();
                match parsed {
                    Some((ch, v)) => {
                        let mut channels = self.channels.lock();
                        if let Some(slot) = channels.get_mut(&ch) {
                            self.feed(slot, ModelInput::Sample(v));
                        }
                    }
                    None => tracing::debug!(uuid = %self.uuid, line, "malformed sample"),
                }
            }
            _ => tracing::debug!(uuid = %self.uuid, line, "unexpected line from TIM"),
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.cancel.cancel();
    }
}
