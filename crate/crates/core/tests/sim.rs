use std::time::{Duration, Instant};

use snaas_core::ncap::decode_packet;
use snaas_core::sim::{parse_scenario, run, run_fleet, SimTimConfig};
use tokio::net::UdpSocket;
use uuid::Uuid;

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn packet_cadence_follows_interval() {
    let sink = UdpSocket::bind("127.0.0.1:0").await.unwrap();
    let mut cfg = SimTimConfig::new(Uuid::new_v4(), vec!["0:sine".parse().unwrap()]);
    cfg.association_interval_ms = 25;
    let _tim = run(cfg.clone(), &sink.local_addr().unwrap().to_string())
        .await
        .unwrap();
    let mut buf = [0u8; 64];
    let mut arrivals = Vec::new();
    while arrivals.len() < 31 {
        let (n, _) = sink.recv_from(&mut buf).await.unwrap();
        assert_eq!(decode_packet(&buf[..n]).unwrap().uuid, cfg.uuid);
        arrivals.push(Instant::now());
    }
    // the first packet goes out at start, not on the cadence
    let span = arrivals[30].duration_since(arrivals[1]).as_secs_f64() * 1000.0;
    let mean = span / 29.0;
    assert!((mean - 25.0).abs() <= 2.5, "mean interval {mean} ms");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn fleet_from_scenario() {
    let sink = UdpSocket::bind("127.0.0.1:0").await.unwrap();
    let configs = parse_scenario(
        "[[tim]]\nuuid = \"random\"\nassociation_interval_ms = 20\nchannels = [\"0:constant:value=1\"]\n\
         [[tim]]\nuuid = \"random\"\nassociation_interval_ms = 20\n",
    )
    .unwrap();
    let fleet = run_fleet(configs, &sink.local_addr().unwrap().to_string())
        .await
        .unwrap();
    assert_eq!(fleet.len(), 2);
    let mut seen = std::collections::HashSet::new();
    let mut buf = [0u8; 64];
    let deadline = Instant::now() + Duration::from_secs(2);
    while seen.len() < 2 && Instant::now() < deadline {
        let (n, _) = sink.recv_from(&mut buf).await.unwrap();
        seen.insert(decode_packet(&buf[..n]).unwrap().uuid);
    }
    assert_eq!(seen, fleet.iter().map(|t| t.uuid).collect());
}
