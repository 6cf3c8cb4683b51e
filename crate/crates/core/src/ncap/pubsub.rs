//! Topic-based fan-out of sample events.
//!
//! Topics are `snaas/<uuid-hex>/<channel_id>`. A subscription pattern is
//! either an exact topic or a prefix ending in the `#` wildcard segment,
//! which matches the prefix itself and everything below it.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use uuid::Uuid;

use super::NcapError;
use crate::ident::{parse_uuid_hex, uuid_hex};

pub fn topic_for(uuid: &Uuid, channel_id: u8) -> String {
    format!("snaas/{}/{}", uuid_hex(uuid), channel_id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicFilter {
    segments: Vec<String>,
    wildcard: bool,
}

impl TopicFilter {
    pub fn parse(pattern: &str) -> Result<Self, NcapError> {
        let invalid = |why: &str| NcapError::InvalidPattern(format!("{pattern:?}: {why}"));
        if pattern.is_empty() {
            return Err(invalid("empty pattern"));
        }
        if pattern.chars().any(char::is_whitespace) {
            return Err(invalid("whitespace in pattern"));
        }
        let mut segments: Vec<String> = pattern.split('/').map(str::to_owned).collect();
        let wildcard = segments.last().is_some_and(|s| s == "#");
        if wildcard {
            segments.pop();
        }
        if segments.iter().any(|s| s.contains('#')) {
            return Err(invalid("'#' must be the whole last segment"));
        }
        if segments.iter().any(String::is_empty) {
            return Err(invalid("empty segment"));
        }
        Ok(Self { segments, wildcard })
    }

    pub fn matches(&self, topic: &str) -> bool {
        let mut parts = topic.split('/');
        for seg in &self.segments {
            if parts.next() != Some(seg.as_str()) {
                return false;
            }
        }
        self.wildcard || parts.next().is_none()
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut segs = self.segments.clone();
        if self.wildcard {
            segs.push("#".into());
        }
        f.write_str(&segs.join("/"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvent {
    pub topic: String,
    #[serde(with = "crate::ident::serde_hex")]
    pub uuid: Uuid,
    pub channel_id: u8,
    pub timestamp_us: u64,
    pub value: f64,
    pub unit_code: u16,
    pub out_of_range: bool,
}

impl SampleEvent {
    /// `<topic> <timestamp_us> <value> <unit_code> <flags>`; flags is 1 when
    /// the value lies outside the channel's declared range.
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {:?} {} {}",
            self.topic,
            self.timestamp_us,
            self.value,
            self.unit_code,
            u8::from(self.out_of_range)
        )
    }

    pub fn parse_line(line: &str) -> Option<Self> {
        let mut it = line.split_whitespace();
        let topic = it.next()?.to_owned();
        let timestamp_us = it.next()?.parse().ok()?;
        let value = it.next()?.parse().ok()?;
        let unit_code = it.next()?.parse().ok()?;
        let out_of_range = match it.next()? {
            "0" => false,
            "1" => true,
            _ => return None,
        };
        if it.next().is_some() {
            return None;
        }
        let mut segs = topic.split('/');
        if segs.next()? != "snaas" {
            return None;
        }
        let uuid = parse_uuid_hex(segs.next()?)?;
        let channel_id = segs.next()?.parse().ok()?;
        if segs.next().is_some() {
            return None;
        }
        Some(Self {
            topic,
            uuid,
            channel_id,
            timestamp_us,
            value,
            unit_code,
            out_of_range,
        })
    }
}

/// Microsecond timestamps that never go backwards: a wall-clock reading
/// taken once, advanced by the monotone clock.
#[derive(Debug, Clone, Copy)]
pub struct Timebase {
    wall_us: u64,
    origin: Instant,
}

impl Timebase {
    pub fn new() -> Self {
        let wall_us = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as u64)
            .unwrap_or(0);
        Self {
            wall_us,
            origin: Instant::now(),
        }
    }

    pub fn now_us(&self) -> u64 {
        self.wall_us + self.origin.elapsed().as_micros() as u64
    }
}

impl Default for Timebase {
    fn default() -> Self {
        Self::new()
    }
}

struct Subscriber {
    id: u64,
    filter: TopicFilter,
    tx: mpsc::UnboundedSender<SampleEvent>,
}

#[derive(Default)]
struct BrokerInner {
    next_id: AtomicU64,
    subscribers: RwLock<Vec<Subscriber>>,
}

#[derive(Clone, Default)]
pub struct Broker {
    inner: Arc<BrokerInner>,
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Delivers `event` to every matching subscriber. Returns how many
    /// received it.
    pub fn publish(&self, event: &SampleEvent) -> usize {
        let subs = self.inner.subscribers.read();
        let mut delivered = 0;
        for sub in subs.iter().filter(|s| s.filter.matches(&event.topic)) {
            if sub.tx.send(event.clone()).is_ok() {
                delivered += 1;
            }
        }
        delivered
    }

    pub fn subscribe(&self, pattern: &str) -> Result<Subscription, NcapError> {
        let filter = TopicFilter::parse(pattern)?;
        let (tx, rx) = mpsc::unbounded_channel();
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        self.inner.subscribers.write().push(Subscriber {
            id,
            filter: filter.clone(),
            tx,
        });
        Ok(Subscription {
            id,
            filter,
            rx,
            broker: Arc::downgrade(&self.inner),
        })
    }

    pub fn subscriber_count(&self) -> usize {
        self.inner.subscribers.read().len()
    }
}

/// A live subscription. Dropping it unsubscribes.
pub struct Subscription {
    id: u64,
    filter: TopicFilter,
    rx: mpsc::UnboundedReceiver<SampleEvent>,
    broker: std::sync::Weak<BrokerInner>,
}

impl Subscription {
    pub fn filter(&self) -> &TopicFilter {
        &self.filter
    }

    pub async fn recv(&mut self) -> Option<SampleEvent> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<SampleEvent> {
        self.rx.try_recv().ok()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if let Some(inner) = self.broker.upgrade() {
            inner.subscribers.write().retain(|s| s.id != self.id);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(uuid: Uuid, ch: u8, value: f64) -> SampleEvent {
        SampleEvent {
            topic: topic_for(&uuid, ch),
            uuid,
            channel_id: ch,
            timestamp_us: 7,
            value,
            unit_code: 1,
            out_of_range: false,
        }
    }

    #[test]
    fn filter_matching() {
        let f = TopicFilter::parse("snaas/abc/#").unwrap();
        assert!(f.matches("snaas/abc/0"));
        assert!(f.matches("snaas/abc/12"));
        assert!(f.matches("snaas/abc"));
        assert!(!f.matches("snaas/abcd/0"));
        assert!(!f.matches("snaas/other/0"));
        let exact = TopicFilter::parse("snaas/abc/0").unwrap();
        assert!(exact.matches("snaas/abc/0"));
        assert!(!exact.matches("snaas/abc/01"));
        assert!(!exact.matches("snaas/abc/0/x"));
        assert!(TopicFilter::parse("#").unwrap().matches("anything/at/all"));
        for bad in ["", "snaas/#/0", "snaas/a#", "snaas//0", "a b"] {
            assert!(TopicFilter::parse(bad).is_err(), "{bad}");
        }
        assert_eq!(f.to_string(), "snaas/abc/#");
    }

    #[test]
    fn each_subscriber_gets_one_copy_in_order() {
        let broker = Broker::new();
        let uuid = Uuid::from_u128(9);
        let mut a = broker
            .subscribe(&format!("snaas/{}/#", uuid_hex(&uuid)))
            .unwrap();
        let mut b = broker.subscribe(&topic_for(&uuid, 1)).unwrap();
        for i in 0..10 {
            broker.publish(&event(uuid, (i % 2) as u8, i as f64));
        }
        let got_a: Vec<f64> = std::iter::from_fn(|| a.try_recv())
            .map(|e| e.value)
            .collect();
        let got_b: Vec<f64> = std::iter::from_fn(|| b.try_recv())
            .map(|e| e.value)
            .collect();
        assert_eq!(got_a, (0..10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(got_b, [1.0, 3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn drop_unsubscribes() {
        let broker = Broker::new();
        let sub = broker.subscribe("#").unwrap();
        assert_eq!(broker.subscriber_count(), 1);
        drop(sub);
        assert_eq!(broker.subscriber_count(), 0);
        assert_eq!(broker.publish(&event(Uuid::nil(), 0, 1.0)), 0);
    }

    #[test]
    fn line_roundtrip() {
        let mut e = event(Uuid::from_u128(0xabc), 3, -1.25);
        e.out_of_range = true;
        let line = e.to_line();
        assert!(line.ends_with(" -1.25 1 1"), "{line}");
        assert_eq!(SampleEvent::parse_line(&line), Some(e));
        assert_eq!(SampleEvent::parse_line("snaas/zz/1 1 1.0 1 0"), None);
    }

    #[test]
    fn timebase_is_monotone() {
        let tb = Timebase::new();
        let mut last = tb.now_us();
        for _ in 0..1000 {
            let now = tb.now_us();
            assert!(now >= last);
            last = now;
        }
    }
}
