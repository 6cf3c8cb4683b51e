//! Random but valid TEDS records and TIM descriptions, for load generation
//! and randomized round-trip checks.

use rand::seq::IndexedRandom;
use rand::Rng;
use uuid::Uuid;

use crate::authoring::TimDescription;
use crate::teds::{
    ChannelKind, Medium, MetaTeds, PhyTeds, TedsClass, TedsRecord, TlvField, TransducerChannelTeds,
    UserTransducerNameTeds, MAX_TEXT_OCTETS,
};

const ALPHABET: &[char] = &[
    'a', 'b', 'z', 'A', 'Q', '0', '9', ' ', '-', '_', '.', '&', '<', '>', '"', '\'', '\t', '\n',
    'é', 'ß', 'µ', '°', '温', '度', '🌡', 'Ω',
];

pub fn random_text(rng: &mut impl Rng) -> String {
    let mut s = String::new();
    let target = rng.random_range(0..=40);
    for _ in 0..target {
        let c = *ALPHABET.choose(rng).expect("non-empty");
        if s.len() + c.len_utf8() > MAX_TEXT_OCTETS {
            break;
        }
        s.push(c);
    }
    s
}

fn random_float(rng: &mut impl Rng) -> f64 {
    loop {
        let v = match rng.random_range(0..3) {
            0 => f64::from_bits(rng.random()),
            1 => rng.random_range(-1e6..1e6),
            _ => f64::from(rng.random_range(-1000i32..1000)),
        };
        if v.is_finite() {
            return v;
        }
    }
}

fn random_extensions(rng: &mut impl Rng, class: TedsClass) -> Vec<TlvField> {
    // type codes that no class interprets
    let free: &[u8] = match class {
        TedsClass::TransducerChannel => &[0x20, 0x41, 0x80, 0xFE],
        _ => &[0x20, 0x41, 0x80, 0xFE, 0x11],
    };
    let n = if rng.random_bool(0.25) {
        rng.random_range(1..=3)
    } else {
        0
    };
    (0..n)
        .map(|_| {
            let len = rng.random_range(0..=32);
            TlvField::new(
                *free.choose(rng).expect("non-empty"),
                (0..len).map(|_| rng.random()).collect::<Vec<u8>>(),
            )
        })
        .collect()
}

pub fn random_meta(rng: &mut impl Rng) -> MetaTeds {
    MetaTeds {
        uuid: Uuid::from_u128(rng.random()),
        channel_count: rng.random_range(1..=u16::MAX),
        response_time_ms: rng.random_range(1..=u32::MAX),
        extensions: vec![],
    }
}

pub fn random_channel(rng: &mut impl Rng, channel_id: u8) -> TransducerChannelTeds {
    let (a, b) = loop {
        let (a, b) = (random_float(rng), random_float(rng));
        if a != b {
            break (a.min(b), a.max(b));
        }
    };
    TransducerChannelTeds {
        channel_id,
        channel_kind: if rng.random_bool(0.8) {
            ChannelKind::Sensor
        } else {
            ChannelKind::Actuator
        },
        unit_code: if rng.random_bool(0.8) {
            rng.random_range(0..=8)
        } else {
            rng.random()
        },
        range_min: a,
        range_max: b,
        sample_period_us: rng.random_range(1..=u32::MAX),
        warmup_delay_us: rng.random(),
        extensions: vec![],
    }
}

pub fn random_name(rng: &mut impl Rng) -> UserTransducerNameTeds {
    UserTransducerNameTeds {
        manufacturer: random_text(rng),
        model_number: random_text(rng),
        user_name: random_text(rng),
        extensions: vec![],
    }
}

pub fn random_phy(rng: &mut impl Rng) -> PhyTeds {
    PhyTeds {
        medium: *[Medium::SimStream, Medium::Ble, Medium::Usb]
            .choose(rng)
            .expect("non-empty"),
        max_payload_octets: rng.random_range(22..=u16::MAX),
        data_rate_bps: rng.random(),
        extensions: vec![],
    }
}

/// A valid record of `class`, sometimes carrying uninterpreted extension
/// fields.
pub fn random_record(rng: &mut impl Rng, class: TedsClass) -> TedsRecord {
    let ext = random_extensions(rng, class);
    match class {
        TedsClass::Meta => TedsRecord::Meta(MetaTeds {
            extensions: ext,
            ..random_meta(rng)
        }),
        TedsClass::TransducerChannel => {
            let id = rng.random();
            TedsRecord::Channel(TransducerChannelTeds {
                extensions: ext,
                ..random_channel(rng, id)
            })
        }
        TedsClass::UserTransducerName => TedsRecord::UserName(UserTransducerNameTeds {
            extensions: ext,
            ..random_name(rng)
        }),
        TedsClass::Phy => TedsRecord::Phy(PhyTeds {
            extensions: ext,
            ..random_phy(rng)
        }),
    }
}

/// A consistent description with `channels` channels (ids 0..channels).
pub fn random_description(rng: &mut impl Rng, channels: u8) -> TimDescription {
    let meta = random_meta(rng);
    TimDescription {
        uuid: meta.uuid,
        channel_count: channels.into(),
        response_time_ms: meta.response_time_ms,
        channels: (0..channels).map(|id| random_channel(rng, id)).collect(),
        name: random_name(rng),
        phy: random_phy(rng),
    }
}

/// A plain temperature-style TIM that streams at `period_us`.
pub fn demo_description(uuid: Uuid, channels: u8, period_us: u32) -> TimDescription {
    TimDescription {
        uuid,
        channel_count: channels.into(),
        response_time_ms: 500,
        channels: (0..channels)
            .map(|id| TransducerChannelTeds {
                channel_id: id,
                channel_kind: ChannelKind::Sensor,
                unit_code: crate::teds::Unit::Celsius.code(),
                range_min: -40.0,
                range_max: 125.0,
                sample_period_us: period_us,
                warmup_delay_us: 0,
                extensions: vec![],
            })
            .collect(),
        name: UserTransducerNameTeds {
            manufacturer: "Acme Sensing".into(),
            model_number: "TMP-36".into(),
            user_name: format!("demo {}", &crate::ident::uuid_hex(&uuid)[..8]),
            extensions: vec![],
        },
        phy: PhyTeds {
            medium: Medium::SimStream,
            max_payload_octets: 64,
            data_rate_bps: 115_200,
            extensions: vec![],
        },
    }
}
