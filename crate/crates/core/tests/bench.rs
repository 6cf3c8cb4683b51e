use snaas_core::bench::{run_with, BenchOptions};
use snaas_core::ncap::Stage;

fn quick(iterations: usize, delay_us: u64) -> BenchOptions {
    let mut o = BenchOptions::new(iterations, delay_us);
    o.association_interval_ms = 20;
    o
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn single_iteration_report() {
    let r = run_with(&quick(1, 0)).await.unwrap();
    assert_eq!(r.case_a.records.len(), 1);
    assert_eq!(r.case_b.records.len(), 1);
    for s in r.case_a.stages.iter().chain(&r.case_b.stages) {
        assert_eq!(s.min, s.max);
        assert_eq!(s.min, s.mean);
    }
    assert_eq!(r.case_a.stage(Stage::RegistryQuery).max, 0.0);
    assert!(r.case_b.stage(Stage::RegistryQuery).min > 0.0);
    assert!(r.cache_once.pass, "{:?}", r.cache_once);
    assert_eq!(r.case_a.registry_fetches, 0);
    assert_eq!(r.case_b.registry_fetches, 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn delay_lands_in_directory_stage() {
    let r = run_with(&quick(3, 30_000)).await.unwrap();
    let b = &r.case_b;
    assert!(b.stage(Stage::RegistryQuery).min >= 30_000.0);
    let largest = Stage::ALL
        .iter()
        .max_by(|x, y| b.stage(**x).mean.total_cmp(&b.stage(**y).mean))
        .unwrap();
    assert_eq!(*largest, Stage::RegistryQuery);
    assert!(r
        .case_a
        .records
        .iter()
        .all(|rec| rec.nanos(Stage::RegistryQuery) == 0));
    assert!(r.case_a.total.mean < b.total.mean);
    for rec in r.case_a.records.iter().chain(&b.records) {
        assert_eq!(rec.total_ns, rec.stage_ns.iter().sum::<u64>());
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn more_delay_slower_cold_path() {
    let fast = run_with(&quick(3, 0)).await.unwrap();
    let slow = run_with(&quick(3, 20_000)).await.unwrap();
    assert!(slow.case_b.total.mean > fast.case_b.total.mean);
}
