//! Chat-completion providers: a real HTTP client with retries, caching and
//! bounded concurrency, and a seeded mock for offline runs.
//!
//! The single supported wire protocol is `POST {base_url}/v1/chat/completions`
//! with `{"model", "messages": [{"role", "content"}...], "temperature"}` and
//! a bearer token read from the environment variable named in the config.
//! Responses are cached under a key derived from every request field, so
//! distinct repeat indices (carried in `tag`) never collapse into one call.

mod cache;
pub(crate) mod http;
mod mock;

pub use cache::cache_key;
pub use mock::{draw_score, MockConfig, MockMode, DEFAULT_MARKER};

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub user: String,
    pub temperature: f64,
    /// Cache discriminator; carries the repeat index and retry marker so
    /// repeated scoring calls stay distinct upstream.
    pub tag: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default)]
    pub provider_meta: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub from_cache: bool,
}

fn default_max_concurrency() -> usize {
    4
}
fn default_max_retries() -> u32 {
    3
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key; empty string
    /// sends no Authorization header.
    #[serde(default)]
    pub api_key_env: String,
    pub model: String,
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("authentication failed with status {status}")]
    Auth { status: u16 },
    #[error("upstream returned status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed response body: {0}")]
    MalformedResponse(String),
    #[error("api key environment variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("request user content is empty")]
    EmptyPrompt,
    #[error("temperature {0} is negative")]
    BadTemperature(f64),
    #[error("max_concurrency must be at least 1")]
    ZeroConcurrency,
    #[error("cache io error: {0}")]
    CacheIo(#[from] std::io::Error),
}

/// Counting semaphore bounding in-flight upstream calls.
pub(crate) struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct SemaphoreGuard<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        SemaphoreGuard(self)
    }
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.0.permits.lock().expect("semaphore poisoned");
        *permits += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Default)]
pub struct ProviderStats {
    /// Requests that went to the network path (cache misses included).
    pub upstream_calls: AtomicU64,
    /// Individual HTTP attempts, retries included.
    pub http_attempts: AtomicU64,
    pub cache_hits: AtomicU64,
    pub retries: AtomicU64,
}

impl ProviderStats {
    pub fn snapshot(&self) -> (u64, u64, u64, u64) {
        (
            self.upstream_calls.load(Ordering::Relaxed),
            self.http_attempts.load(Ordering::Relaxed),
            self.cache_hits.load(Ordering::Relaxed),
            self.retries.load(Ordering::Relaxed),
        )
    }
}

enum ProviderKind {
    Http {
        cfg: ProviderConfig,
        agent: ureq::Agent,
        cache_dir: Option<PathBuf>,
        semaphore: Semaphore,
    },
    Mock(MockConfig),
}

/// Thread-safe provider handle; callers may issue requests from any number
/// of workers and the internal semaphore keeps upstream concurrency within
/// the configured bound.
pub struct Provider {
    kind: ProviderKind,
    pub stats: ProviderStats,
    warnings: Mutex<Vec<String>>,
}

impl Provider {
    pub fn http(cfg: ProviderConfig, cache_dir: Option<PathBuf>) -> Result<Self, ProviderError> {
        if cfg.max_concurrency == 0 {
            return Err(ProviderError::ZeroConcurrency);
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(std::time::Duration::from_secs(cfg.timeout_secs))
            .build();
        let semaphore = Semaphore::new(cfg.max_concurrency);
        Ok(Provider {
            kind: ProviderKind::Http {
                cfg,
                agent,
                cache_dir,
                semaphore,
            },
            stats: ProviderStats::default(),
            warnings: Mutex::new(Vec::new()),
        })
    }

    pub fn mock(cfg: MockConfig) -> Self {
        Provider {
            kind: ProviderKind::Mock(cfg),
            stats: ProviderStats::default(),
            warnings: Mutex::new(Vec::new()),
        }
    }

    pub fn is_mock(&self) -> bool {
        matches!(self.kind, ProviderKind::Mock(_))
    }

    pub fn model_name(&self) -> &str {
        match &self.kind {
            ProviderKind::Http { cfg, .. } => &cfg.model,
            ProviderKind::Mock(_) => "mock",
        }
    }

    /// Completes a request: mock providers answer deterministically, HTTP
    /// providers go through the cache (when configured) and the retry loop.
    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        if req.user.is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        if req.temperature < 0.0 {
            return Err(ProviderError::BadTemperature(req.temperature));
        }
        match &self.kind {
            ProviderKind::Mock(cfg) => Ok(mock::mock_complete(req, cfg)),
            ProviderKind::Http {
                cfg,
                agent,
                cache_dir,
                semaphore,
            } => match cache_dir {
                Some(dir) => cache::cached_complete(self, cfg, agent, semaphore, req, dir),
                None => http::complete(self, cfg, agent, semaphore, req),
            },
        }
    }

    pub(crate) fn warn(&self, message: String) {
        self.warnings
            .lock()
            .expect("warnings poisoned")
            .push(message);
    }

    pub fn take_warnings(&self) -> Vec<String> {
        std::mem::take(&mut *self.warnings.lock().expect("warnings poisoned"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_prompt_rejected() {
        let p = Provider::mock(MockConfig::default());
        let req = ChatRequest {
            model: "m".into(),
            system: None,
            user: String::new(),
            temperature: 0.0,
            tag: "t".into(),
        };
        assert!(matches!(p.complete(&req), Err(ProviderError::EmptyPrompt)));
    }

    #[test]
    fn negative_temperature_rejected() {
        let p = Provider::mock(MockConfig::default());
        let req = ChatRequest {
            model: "m".into(),
            system: None,
            user: "hi".into(),
            temperature: -0.5,
            tag: "t".into(),
        };
        assert!(matches!(
            p.complete(&req),
            Err(ProviderError::BadTemperature(_))
        ));
    }

    #[test]
    fn zero_concurrency_rejected() {
        let cfg = ProviderConfig {
            base_url: "http://localhost".into(),
            api_key_env: String::new(),
            model: "m".into(),
            max_concurrency: 0,
            max_retries: 0,
            timeout_secs: 1,
            initial_backoff_ms: 1,
        };
        assert!(matches!(
            Provider::http(cfg, None),
            Err(ProviderError::ZeroConcurrency)
        ));
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;
        let sem = Arc::new(Semaphore::new(3));
        let inflight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for _ in 0..16 {
            let sem = sem.clone();
            let inflight = inflight.clone();
            let peak = peak.clone();
            handles.push(std::thread::spawn(move || {
                let _g = sem.acquire();
                let now = inflight.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(std::time::Duration::from_millis(5));
                inflight.fetch_sub(1, Ordering::SeqCst);
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }
}
