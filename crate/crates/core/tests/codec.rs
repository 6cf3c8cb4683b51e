use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snaas_core::fixtures::random_record;
use snaas_core::teds::{
    decode_teds, encode_teds, MetaTeds, TedsClass, TedsError, TedsRecord, TlvField,
};
use uuid::Uuid;

/// Builds a block by hand from the documented layout.
fn oracle_block(class: u8, tlvs: &[(u8, &[u8])]) -> Vec<u8> {
    let mut body = vec![class, 0x01];
    for (t, v) in tlvs {
        body.push(*t);
        body.push(v.len() as u8);
        body.extend_from_slice(v);
    }
    let len = (body.len() + 2) as u32;
    let mut out = len.to_be_bytes().to_vec();
    out.extend(body);
    let sum: u32 = out.iter().map(|&b| u32::from(b)).sum();
    let check = 0xFFFF - (sum % 0x10000) as u16;
    out.extend(check.to_be_bytes());
    out
}

#[test]
fn meta_matches_hand_built_layout() {
    let uuid = Uuid::from_bytes([0xA5; 16]);
    let record = TedsRecord::Meta(MetaTeds {
        uuid,
        channel_count: 3,
        response_time_ms: 250,
        extensions: vec![TlvField::new(0x80, vec![1, 2, 3])],
    });
    let want = oracle_block(
        0x01,
        &[
            (0x04, &[0xA5; 16]),
            (0x0D, &3u16.to_be_bytes()),
            (0x0E, &250u32.to_be_bytes()),
            (0x80, &[1, 2, 3]),
        ],
    );
    assert_eq!(encode_teds(&record).unwrap(), want);
    assert_eq!(decode_teds(&want).unwrap(), record);
}

#[test]
fn thousand_random_records_per_class_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7ED5);
    for class in TedsClass::ALL {
        for _ in 0..1000 {
            let r = random_record(&mut rng, class);
            let bytes = encode_teds(&r).unwrap();
            assert_eq!(decode_teds(&bytes).unwrap(), r);
            // re-encoding is stable
            assert_eq!(encode_teds(&decode_teds(&bytes).unwrap()).unwrap(), bytes);
        }
    }
}

#[test]
fn thousand_single_octet_corruptions_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBAD);
    for i in 0..1000 {
        let class = TedsClass::ALL[i % 4];
        let mut bytes = encode_teds(&random_record(&mut rng, class)).unwrap();
        let at = rng.random_range(0..bytes.len());
        let flip: u8 = rng.random_range(1..=255);
        bytes[at] ^= flip;
        match decode_teds(&bytes) {
            Err(TedsError::BadChecksum { .. }) | Err(TedsError::BadLength(_)) => {}
            other => panic!("corruption at {at} of {:?} gave {other:?}", class),
        }
    }
}

#[test]
fn truncations_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bytes = encode_teds(&random_record(&mut rng, TedsClass::Phy)).unwrap();
    for n in 0..bytes.len() {
        assert!(decode_teds(&bytes[..n]).is_err(), "prefix {n}");
    }
}
