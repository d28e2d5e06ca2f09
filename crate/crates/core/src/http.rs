//! Blocking JSON-over-HTTP client shared by the provider adapters.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Environment variable holding an optional bearer token for providers.
pub const TOKEN_ENV: &str = "STMTBENCH_PROVIDER_TOKEN";

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    base: String,
    agent: ureq::Agent,
    token: Option<String>,
    retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(120))
            .build();
        JsonClient {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    /// POSTs `body` to `path`, retrying transport failures, 429 and 5xx with
    /// exponential backoff.
    pub fn post<Q: Serialize, R: DeserializeOwned>(&self, path: &str, body: &Q) -> Result<R> {
        let url = format!("{}{}", self.base, path);
        let payload = serde_json::to_value(body)?;
        let mut backoff = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            let mut req = self.agent.post(&url);
            if let Some(t) = &self.token {
                req = req.set("Authorization", &format!("Bearer {t}"));
            }
            match req.send_json(payload.clone()) {
                Ok(resp) => {
                    return resp
                        .into_json::<R>()
                        .map_err(|e| Error::provider(format!("{url}: bad response body: {e}")));
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    last = format!("{url}: HTTP {code}: {}", text.trim());
                    if code != 429 && code < 500 {
                        return Err(Error::provider(last));
                    }
                }
                Err(e) => last = format!("{url}: {e}"),
            }
            if attempt < self.retry.attempts {
                log::warn!("attempt {attempt} failed ({last}); retrying in {backoff:?}");
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(Error::provider(format!(
            "giving up after {} attempts: {last}",
            self.retry.attempts
        )))
    }
}

/// Runs `work` over `jobs` with at most `limit` concurrent workers and
/// returns results in job order regardless of completion order.
pub(crate) fn run_bounded<J, T, F>(jobs: &[J], limit: usize, work: F) -> Vec<T>
where
    J: Sync,
    T: Send,
    F: Fn(usize, &J) -> T + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let slots: Vec<Mutex<Option<T>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = limit.clamp(1, jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= jobs.len() {
                    break;
                }
                let out = work(k, &jobs[k]);
                *slots[k].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every job ran"))
        .collect()
}
