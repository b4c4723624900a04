//! Text-generation backends behind one call, with an on-disk response cache.
//!
//! Every request is reduced to a SHA-256 digest over the six fields that
//! determine a response. The cache is consulted first; misses go to the
//! backend and are committed atomically before the text is returned.

mod cache;
mod mock;
mod remote;

use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{ResponseCache, StagedEntry};
pub use mock::{MockBackend, QUESTION_HEADER, REPORTS_HEADER};
pub use remote::RemoteBackend;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("environment variable `{0}` holding the API key is not set")]
    AuthMissing(String),
    #[error("backend rejected request with status {status}: {body}")]
    BackendRejected { status: u16, body: String },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("no scripted mock response for digest {0}")]
    FixtureMiss(String),
    #[error("offline mode: no cached response for digest {0}")]
    Offline(String),
    #[error("cache i/o error at {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub trial_index: u32,
}

impl GenRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_text.is_empty() {
            return Err(GatewayError::InvalidRequest("user_text is empty".into()));
        }
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenResult {
    pub text: String,
    pub backend_id: String,
    pub cached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

/// How the mock answers a request whose digest has no scripted response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFallback {
    /// Fail with [`GatewayError::FixtureMiss`].
    #[default]
    Off,
    /// Synthesize a well-formed answer seeded by the request digest.
    PerTrial,
    /// As `PerTrial`, but the trial index does not influence the text, so
    /// every trial of a request gets the same answer.
    TrialInvariant,
}

fn default_parallelism() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_retry_base_ms() -> u64 {
    500
}

fn default_max_attempts() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    pub model_name: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub fixture_path: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub mock_fallback: MockFallback,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
}

impl BackendConfig {
    pub fn mock(model_name: &str, fixture_path: Option<PathBuf>, fallback: MockFallback) -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            model_name: model_name.into(),
            api_key_env: None,
            fixture_path,
            parallelism: default_parallelism(),
            mock_fallback: fallback,
            timeout_secs: default_timeout_secs(),
            retry_base_ms: default_retry_base_ms(),
            max_attempts: default_max_attempts(),
        }
    }

    pub fn remote(base_url: &str, model_name: &str, api_key_env: &str) -> Self {
        Self {
            kind: BackendKind::Remote,
            base_url: Some(base_url.into()),
            model_name: model_name.into(),
            api_key_env: Some(api_key_env.into()),
            fixture_path: None,
            parallelism: default_parallelism(),
            mock_fallback: MockFallback::Off,
            timeout_secs: default_timeout_secs(),
            retry_base_ms: default_retry_base_ms(),
            max_attempts: default_max_attempts(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model_name.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("model_name is required".into()));
        }
        if self.parallelism == 0 {
            return Err(GatewayError::InvalidConfig("parallelism must be positive".into()));
        }
        match self.kind {
            BackendKind::Remote => {
                if self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                    return Err(GatewayError::InvalidConfig("remote backend requires base_url".into()));
                }
                if self.max_attempts == 0 {
                    return Err(GatewayError::InvalidConfig("max_attempts must be positive".into()));
                }
            }
            BackendKind::Mock => {
                if self.fixture_path.is_none() && self.mock_fallback == MockFallback::Off {
                    return Err(GatewayError::InvalidConfig(
                        "mock backend requires fixture_path (or a fallback generator)".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn backend_id(&self) -> String {
        let kind = match self.kind {
            BackendKind::Remote => "remote",
            BackendKind::Mock => "mock",
        };
        format!("{kind}:{}", self.model_name)
    }
}

/// SHA-256 over the fields that determine a response, as 64 lowercase hex chars.
///
/// Each field is length-prefixed and numbers are encoded big-endian, so the
/// digest is independent of platform and of field boundaries.
pub fn request_digest(cfg: &BackendConfig, req: &GenRequest) -> String {
    let mut h = Sha256::new();
    h.update(b"factorcast/gen/v1");
    for field in [&cfg.model_name, &req.system_text, &req.user_text] {
        h.update((field.len() as u64).to_be_bytes());
        h.update(field.as_bytes());
    }
    h.update(req.temperature.to_bits().to_be_bytes());
    h.update(req.max_tokens.to_be_bytes());
    h.update(req.trial_index.to_be_bytes());
    hex::encode(h.finalize())
}

/// Counting semaphore bounding in-flight backend calls.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct PermitGuard<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().expect("permit lock poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock poisoned");
        }
        *free -= 1;
        PermitGuard(self)
    }
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock poisoned") += 1;
        self.0.cv.notify_one();
    }
}

enum Backend {
    Remote(RemoteBackend),
    Mock(MockBackend),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GatewayOptions {
    /// Never contact a remote backend; cache and mock only.
    pub offline: bool,
    /// Seeds the mock fallback generator.
    pub seed: u64,
}

/// A configured backend plus its response cache. Shareable across threads.
pub struct Gateway {
    cfg: BackendConfig,
    backend: Backend,
    cache: Option<ResponseCache>,
    options: GatewayOptions,
    permits: Permits,
}

impl Gateway {
    pub fn new(cfg: BackendConfig, cache_dir: Option<&Path>, options: GatewayOptions) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let backend = match cfg.kind {
            BackendKind::Remote => Backend::Remote(RemoteBackend::new(&cfg)?),
            BackendKind::Mock => Backend::Mock(MockBackend::from_config(&cfg, options.seed)?),
        };
        Ok(Self {
            permits: Permits::new(cfg.parallelism),
            cache: cache_dir.map(ResponseCache::new),
            backend,
            options,
            cfg,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn digest(&self, req: &GenRequest) -> String {
        request_digest(&self.cfg, req)
    }

    pub fn generate(&self, req: &GenRequest) -> Result<GenResult, GatewayError> {
        req.validate()?;
        let digest = self.digest(req);
        let backend_id = self.cfg.backend_id();
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&digest)? {
                return Ok(GenResult {
                    text,
                    backend_id,
                    cached: true,
                });
            }
        }

        let (text, store) = {
            let _permit = self.permits.acquire();
            match &self.backend {
                Backend::Mock(mock) => match mock.scripted(&digest) {
                    Some(text) => (text.to_string(), true),
                    // Synthesized text depends on the seed and fallback mode,
                    // neither of which is in the digest, so it is never cached.
                    None => (mock.respond(&digest, req)?, false),
                },
                Backend::Remote(_) if self.options.offline => return Err(GatewayError::Offline(digest)),
                Backend::Remote(remote) => (remote.complete(&self.cfg, req)?, true),
            }
        };
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        if let (Some(cache), true) = (&self.cache, store) {
            cache.put(&digest, &text)?;
        }
        Ok(GenResult {
            text,
            backend_id,
            cached: false,
        })
    }
}
