//! Client-side round robin over replica base URLs.

use std::future::Future;
use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

/// Outcome of one attempt against one replica.
#[derive(Debug)]
pub enum Attempt<T, E> {
    Done(T),
    /// The replica answered definitively (e.g. a 4xx); no failover.
    Rejected(E),
    /// Transport failure or 5xx; the next replica is tried.
    Failed(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError<E> {
    #[error("request rejected: {0:?}")]
    Rejected(E),
    #[error("all replicas failed: {}", .0.join("; "))]
    AllReplicasFailed(Vec<String>),
}

/// Cyclic replica selection with a cursor owned by this client instance.
#[derive(Debug)]
pub struct RoundRobin {
    urls: Vec<String>,
    cursor: AtomicUsize,
}

impl RoundRobin {
    /// Panics if `urls` is empty; configuration validation rules that out.
    pub fn new(urls: Vec<String>) -> Self {
        assert!(!urls.is_empty(), "round robin needs at least one replica");
        RoundRobin {
            urls,
            cursor: AtomicUsize::new(0),
        }
    }

    pub fn urls(&self) -> &[String] {
        &self.urls
    }

    /// Sends one logical request. The first attempt goes to the next replica
    /// in cycle order; on failure the following replicas are tried in turn,
    /// each at most once. A single replica gets one retry.
    pub async fn call<T, E, F, Fut>(&self, mut attempt: F) -> Result<T, BalanceError<E>>
    where
        F: FnMut(String) -> Fut,
        Fut: Future<Output = Attempt<T, E>>,
    {
        let n = self.urls.len();
        let start = self.cursor.fetch_add(1, Ordering::Relaxed);
        let mut failures = Vec::new();
        for k in 0..n.max(2) {
            let url = &self.urls[(start + k) % n];
            match attempt(url.clone()).await {
                Attempt::Done(v) => return Ok(v),
                Attempt::Rejected(e) => return Err(BalanceError::Rejected(e)),
                Attempt::Failed(msg) => {
                    log::warn!("replica {url} failed: {msg}");
                    failures.push(format!("{url}: {msg}"));
                }
            }
        }
        Err(BalanceError::AllReplicasFailed(failures))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::sync::Mutex;

    fn urls(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    #[tokio::test]
    async fn cyclic_distribution() {
        let rr = RoundRobin::new(urls(3));
        let hits = Mutex::new(BTreeMap::<String, usize>::new());
        for _ in 0..6 {
            let r: Result<(), BalanceError<()>> = rr
                .call(|u| {
                    *hits.lock().unwrap().entry(u.to_owned()).or_default() += 1;
                    async { Attempt::Done(()) }
                })
                .await;
            r.unwrap();
        }
        assert_eq!(hits.into_inner().unwrap().values().copied().collect::<Vec<_>>(), vec![2, 2, 2]);
    }

    #[tokio::test]
    async fn failover_to_next_replica() {
        let rr = RoundRobin::new(urls(3));
        let served = Mutex::new(Vec::new());
        for _ in 0..6 {
            let r: Result<String, BalanceError<()>> = rr
                .call(|u| {
                    let u = u.to_owned();
                    async move {
                        if u == "r1" {
                            Attempt::Failed("connection refused".into())
                        } else {
                            Attempt::Done(u)
                        }
                    }
                })
                .await;
            served.lock().unwrap().push(r.unwrap());
        }
        assert_eq!(served.into_inner().unwrap(), vec!["r0", "r2", "r2", "r0", "r2", "r2"]);
    }

    #[tokio::test]
    async fn all_down() {
        let rr = RoundRobin::new(urls(3));
        let r: Result<(), BalanceError<()>> = rr.call(|_| async { Attempt::Failed("down".into()) }).await;
        match r {
            Err(BalanceError::AllReplicasFailed(f)) => assert_eq!(f.len(), 3),
            other => panic!("{other:?}"),
        }
        let single = RoundRobin::new(urls(1));
        let r: Result<(), BalanceError<()>> = single.call(|_| async { Attempt::Failed("down".into()) }).await;
        assert!(matches!(r, Err(BalanceError::AllReplicasFailed(f)) if f.len() == 2));
    }

    #[tokio::test]
    async fn rejection_is_not_retried() {
        let rr = RoundRobin::new(urls(3));
        let calls = AtomicUsize::new(0);
        let r: Result<(), BalanceError<u16>> = rr
            .call(|_| {
                calls.fetch_add(1, Ordering::SeqCst);
                async { Attempt::Rejected(404) }
            })
            .await;
        assert_eq!(r, Err(BalanceError::Rejected(404)));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    async fn first_choice(rr: &RoundRobin) -> String {
        let r: Result<String, BalanceError<()>> = rr.call(|u| async move { Attempt::Done(u) }).await;
        r.unwrap()
    }

    #[tokio::test]
    async fn cursors_are_per_client() {
        let a = RoundRobin::new(urls(2));
        let b = RoundRobin::new(urls(2));
        assert_eq!(first_choice(&a).await, "r0");
        assert_eq!(first_choice(&b).await, "r0");
        assert_eq!(first_choice(&a).await, "r1");
    }
}
