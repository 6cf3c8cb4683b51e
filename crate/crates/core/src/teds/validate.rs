use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{MetaTeds, PhyTeds, TransducerChannelTeds, UserTransducerNameTeds};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ChannelCountMismatch { declared: u16, supplied: usize },
    DuplicateChannelId { channel_id: u8 },
    InvalidRecord { record: String, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ChannelCountMismatch { declared, supplied } => write!(
                f,
                "meta declares {declared} channels but {supplied} channel TEDS were supplied"
            ),
            Violation::DuplicateChannelId { channel_id } => {
                write!(f, "channel id {channel_id} is used more than once")
            }
            Violation::InvalidRecord { record, reason } => write!(f, "{record}: {reason}"),
        }
    }
}

/// Outcome of cross-checking a full TEDS set. Empty means the TIM can be
/// configured.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_teds_set(
    meta: &MetaTeds,
    channels: &[TransducerChannelTeds],
    name: &UserTransducerNameTeds,
    phy: &PhyTeds,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut invalid = |record: String, result: Result<(), super::TedsError>| {
        if let Err(e) = result {
            violations.push(Violation::InvalidRecord {
                record,
                reason: e.to_string(),
            });
        }
    };
    invalid("meta".into(), meta.validate());
    for ch in channels {
        invalid(format!("channel {}", ch.channel_id), ch.validate());
    }
    invalid("name".into(), name.validate());
    invalid("phy".into(), phy.validate());

    if usize::from(meta.channel_count) != channels.len() {
        violations.push(Violation::ChannelCountMismatch {
            declared: meta.channel_count,
            supplied: channels.len(),
        });
    }
    let mut seen = BTreeSet::new();
    let mut reported = BTreeSet::new();
    for ch in channels {
        if !seen.insert(ch.channel_id) && reported.insert(ch.channel_id) {
            violations.push(Violation::DuplicateChannelId {
                channel_id: ch.channel_id,
            });
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use uuid::Uuid;

    fn set(
        count: u16,
        ids: &[u8],
    ) -> (
        MetaTeds,
        Vec<TransducerChannelTeds>,
        UserTransducerNameTeds,
        PhyTeds,
    ) {
        let meta = MetaTeds {
            uuid: Uuid::from_u128(7),
            channel_count: count,
            response_time_ms: 100,
            extensions: vec![],
        };
        let channels = ids
            .iter()
            .map(|&id| TransducerChannelTeds {
                channel_id: id,
                range_min: 0.0,
                range_max: 1.0,
                sample_period_us: 1000,
                ..Default::default()
            })
            .collect();
        let phy = PhyTeds {
            max_payload_octets: 64,
            ..Default::default()
        };
        (meta, channels, UserTransducerNameTeds::default(), phy)
    }

    #[test]
    fn consistent_set_is_clean() {
        let (m, c, n, p) = set(1, &[0]);
        assert!(validate_teds_set(&m, &c, &n, &p).is_ok());
    }

    #[test]
    fn count_mismatch() {
        let (m, c, n, p) = set(2, &[0]);
        let report = validate_teds_set(&m, &c, &n, &p);
        assert_eq!(
            report.violations,
            vec![Violation::ChannelCountMismatch {
                declared: 2,
                supplied: 1
            }]
        );
    }

    #[test]
    fn duplicate_ids_reported_once() {
        let (m, c, n, p) = set(3, &[0, 0, 0]);
        let report = validate_teds_set(&m, &c, &n, &p);
        assert_eq!(
            report.violations,
            vec![Violation::DuplicateChannelId { channel_id: 0 }]
        );
    }

    #[test]
    fn record_failures_collected() {
        let (mut m, mut c, n, mut p) = set(1, &[0]);
        m.response_time_ms = 0;
        c[0].sample_period_us = 0;
        p.max_payload_octets = 8;
        let report = validate_teds_set(&m, &c, &n, &p);
        assert_eq!(report.violations.len(), 3);
        assert!(!report.is_ok());
    }
}
