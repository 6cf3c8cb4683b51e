use std::time::{Duration, Instant};

use snaas_client::{AuthoringClient, ControlClient};
use snaas_core::authoring::{parse_description, render_description};
use snaas_core::bench::Testbed;
use snaas_core::fixtures::demo_description;
use snaas_core::ncap::{ChannelModel, ChannelUpdate, DeviceState};
use snaas_service::{authoring_router, class_code, control_router, spawn_http};
use uuid::Uuid;

#[test]
fn class_selectors() {
    assert_eq!(class_code("meta"), Some(0x01));
    assert_eq!(class_code("Channel"), Some(0x03));
    assert_eq!(class_code("0c"), Some(0x0C));
    assert_eq!(class_code("0x0D"), Some(0x0D));
    assert_eq!(class_code("bogus"), None);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn authoring_endpoints() {
    let bed = Testbed::start(0, None).await.unwrap();
    let addr = spawn_http("127.0.0.1:0", authoring_router(bed.client.clone()))
        .await
        .unwrap();
    let client = AuthoringClient::new(&addr.to_string());

    let template = client.template("channel").await.unwrap();
    assert!(template.contains("class=\"03\""), "{template}");
    let err = client.template("7F").await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(404));
    assert_eq!(err.kind(), Some("unknown_class"));

    let desc = demo_description(Uuid::new_v4(), 3, 50_000);
    let receipt = client
        .register(&render_description(&desc).unwrap())
        .await
        .unwrap();
    assert_eq!(receipt.uuid, desc.uuid);
    assert_eq!(receipt.entries.len(), 6);
    let back = parse_description(&client.description(desc.uuid).await.unwrap()).unwrap();
    assert_eq!(back, desc);

    let err = client.register("<tim>").await.unwrap_err();
    assert_eq!(err.kind(), Some("schema_error"));
    let err = client.description(Uuid::new_v4()).await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(404));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn control_endpoints() {
    let bed = Testbed::start(0, None).await.unwrap();
    let addr = spawn_http("127.0.0.1:0", control_router(bed.ncap().clone()))
        .await
        .unwrap();
    let client = ControlClient::new(&format!("http://{addr}"));
    let uuid = Uuid::new_v4();
    bed.register(uuid, 2, 100_000).await.unwrap();

    assert_eq!(
        client.device(uuid).await.unwrap_err().kind(),
        Some("unknown_device")
    );
    let _tim = bed.launch_tim(uuid, 2, 50, true).await.unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let devices = client.devices().await.unwrap();
        if devices
            .iter()
            .any(|d| d.uuid == uuid && d.state == DeviceState::Live)
        {
            break;
        }
        assert!(Instant::now() < deadline, "never live: {devices:?}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }

    let detail = client.device(uuid).await.unwrap();
    assert_eq!(detail.channels.len(), 2);
    assert!(detail
        .channels
        .iter()
        .all(|c| c.runtime.as_ref().is_some_and(|r| r.enabled)));

    let update = ChannelUpdate {
        enabled: Some(false),
        interval_us: Some(250_000),
        model: Some(ChannelModel::EventDriven),
        deadband: Some(0.25),
    };
    let state = client.update_channel(uuid, 1, &update).await.unwrap();
    assert!(!state.enabled);
    assert_eq!(state.sampling_interval_us, 250_000);
    assert_eq!(state.channel_model, ChannelModel::EventDriven);
    assert_eq!(state.deadband, 0.25);

    let err = client.set_sampling_interval(uuid, 0, 0).await.unwrap_err();
    assert_eq!(err.kind(), Some("invalid_interval"));
    let err = client.set_channel_enabled(uuid, 9, true).await.unwrap_err();
    assert_eq!(err.kind(), Some("unknown_channel"));

    let records = client.latency().await.unwrap();
    assert!(records.iter().any(|r| r.uuid == uuid));
    let csv = client.latency_csv().await.unwrap();
    assert!(csv.starts_with("seq,uuid,case,coalesced,"), "{csv}");
    assert_eq!(csv.lines().count(), records.len() + 1);

    assert_eq!(client.flush_cache().await.unwrap(), 1);
}
