//! Collapses concurrent requests for the same key into one execution.

use std::collections::HashMap;
use std::future::Future;
use std::hash::Hash;
use std::sync::Arc;

use futures::future::{BoxFuture, FutureExt, Shared};
use parking_lot::Mutex;

type Flight<V> = Shared<BoxFuture<'static, V>>;

pub struct SingleFlight<K, V: Clone> {
    inflight: Arc<Mutex<HashMap<K, Flight<V>>>>,
}

impl<K, V: Clone> Default for SingleFlight<K, V> {
    fn default() -> Self {
        Self {
            inflight: Arc::default(),
        }
    }
}

impl<K, V> SingleFlight<K, V>
where
    K: Eq + Hash + Clone + Send + 'static,
    V: Clone + Send + Sync + 'static,
{
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `make()` unless a call for `key` is already in flight, in which
    /// case this waits for that call's result. The work runs on its own task,
    /// so it completes even if every caller gives up. The flag is true for
    /// the caller that started the work.
    pub async fn run<F, Fut>(&self, key: K, make: F) -> (V, bool)
    where
        F: FnOnce() -> Fut,
        Fut: Future<Output = V> + Send + 'static,
    {
        let (flight, leader) = {
            let mut map = self.inflight.lock();
            match map.get(&key) {
                Some(f) => (f.clone(), false),
                None => {
                    let work = make();
                    let inflight = self.inflight.clone();
                    let k = key.clone();
                    let task = tokio::spawn(async move {
                        let v = work.await;
                        inflight.lock().remove(&k);
                        v
                    });
                    let f = async move { task.await.expect("single-flight task panicked") }
                        .boxed()
                        .shared();
                    map.insert(key, f.clone());
                    (f, true)
                }
            }
        };
        (flight.await, leader)
    }

    pub fn in_flight(&self) -> usize {
        self.inflight.lock().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    #[tokio::test]
    async fn concurrent_calls_share_one_execution() {
        let sf = Arc::new(SingleFlight::<u32, u32>::new());
        let runs = Arc::new(AtomicUsize::new(0));
        let mut tasks = Vec::new();
        for _ in 0..10 {
            let (sf, runs) = (sf.clone(), runs.clone());
            tasks.push(tokio::spawn(async move {
                sf.run(7, || async move {
                    runs.fetch_add(1, Ordering::SeqCst);
                    tokio::time::sleep(Duration::from_millis(50)).await;
                    42
                })
                .await
            }));
        }
        let mut leaders = 0;
        for t in tasks {
            let (v, leader) = t.await.unwrap();
            assert_eq!(v, 42);
            leaders += usize::from(leader);
        }
        assert_eq!(runs.load(Ordering::SeqCst), 1);
        assert_eq!(leaders, 1);
        assert_eq!(sf.in_flight(), 0);
    }

    #[tokio::test]
    async fn later_calls_run_again() {
        let sf = SingleFlight::<u32, u32>::new();
        assert_eq!(sf.run(1, || async { 1 }).await, (1, true));
        assert_eq!(sf.run(1, || async { 2 }).await, (2, true));
    }

    #[tokio::test]
    async fn abandoned_flight_still_completes() {
        let sf = SingleFlight::<u32, u32>::new();
        let done = Arc::new(AtomicUsize::new(0));
        let d = done.clone();
        let fut = sf.run(1, move || async move {
            tokio::time::sleep(Duration::from_millis(20)).await;
            d.fetch_add(1, Ordering::SeqCst);
            5
        });
        let _ = tokio::time::timeout(Duration::from_millis(1), fut).await;
        tokio::time::sleep(Duration::from_millis(60)).await;
        assert_eq!(done.load(Ordering::SeqCst), 1);
        assert_eq!(sf.in_flight(), 0);
    }
}
