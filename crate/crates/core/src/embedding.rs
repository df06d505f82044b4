//! Text → unit vector.
//!
//! Two backends share one contract: every returned vector is finite and has
//! L2 norm 1, so downstream inner products are cosine similarities.
//!
//! - `hashing`: signed feature hashing of lowercase tokens with FNV-1a 64.
//!   Deterministic on every platform; needs nothing external.
//! - `remote`: a local model server speaking
//!   `POST {url}/api/embeddings {"model", "prompt"} -> {"embedding": [...]}`.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fnv::fnv1a64;
use crate::keyword_index::tokenize;
use crate::limit::InFlightLimit;
use crate::par::maybe_par_map;

pub const DEFAULT_HASHING_DIM: usize = 256;
pub const MIN_HASHING_DIM: usize = 8;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_RETRY_BACKOFF: Duration = Duration::from_millis(500);
/// Concurrent requests allowed per remote embedder handle.
pub const REMOTE_MAX_IN_FLIGHT: usize = 4;

pub const ENV_EMBED_URL: &str = "PRAGYA_EMBED_URL";
pub const ENV_EMBED_MODEL: &str = "PRAGYA_EMBED_MODEL";

#[cfg(test)]
const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text is empty")]
    EmptyText,
    #[error("embedding server unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("embedding server returned an unexpected response: {0}")]
    RemoteMalformed(String),
    #[error("text produced an all-zero embedding")]
    ZeroVector,
    #[error("invalid embedder configuration: {0}")]
    InvalidConfig(String),
    #[error("batch item {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<EmbedError>,
    },
}

/// A finite, L2-normalized vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length.
    pub fn normalize(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::RemoteMalformed("non-finite component".into()));
        }
        let as_f64: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        Self::from_f64(&as_f64)
    }

    fn from_f64(values: &[f64]) -> Result<Self, EmbedError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbedError::ZeroVector);
        }
        Ok(Self {
            values: values.iter().map(|v| (v / norm) as f32).collect(),
        })
    }

    /// Wraps values that are already unit length, e.g. read back from an
    /// index file. Returns `None` if the norm is off by more than `tolerance`.
    pub fn from_unit(values: Vec<f32>, tolerance: f64) -> Option<Self> {
        let v = Self { values };
        (v.values.iter().all(|x| x.is_finite()) && (v.norm() - 1.0).abs() <= tolerance).then_some(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Inner product accumulated in f64, in index order.
    pub fn dot(&self, other: &[f32]) -> f64 {
        dot(&self.values, other)
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Remote,
    Hashing,
}

impl std::str::FromStr for EmbedderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash" | "hashing" => Ok(Self::Hashing),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown embedder `{other}` (expected hash|remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub dim: usize,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub retry_backoff: Duration,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self::hashing(DEFAULT_HASHING_DIM)
    }
}

impl EmbedderConfig {
    pub fn hashing(dim: usize) -> Self {
        Self {
            kind: EmbedderKind::Hashing,
            endpoint_url: None,
            model_name: None,
            dim,
            timeout: DEFAULT_TIMEOUT,
            max_retries: DEFAULT_MAX_RETRIES,
            retry_backoff: DEFAULT_RETRY_BACKOFF,
        }
    }

    pub fn remote(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: EmbedderKind::Remote,
            endpoint_url: Some(endpoint_url.into()),
            model_name: Some(model_name.into()),
            ..Self::hashing(DEFAULT_HASHING_DIM)
        }
    }

    /// Remote configuration from `PRAGYA_EMBED_URL` / `PRAGYA_EMBED_MODEL`.
    pub fn remote_from_env() -> Option<Self> {
        let url = std::env::var(ENV_EMBED_URL).ok()?;
        let model = std::env::var(ENV_EMBED_MODEL).ok()?;
        Some(Self::remote(url, model))
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        match self.kind {
            EmbedderKind::Hashing if self.dim < MIN_HASHING_DIM => {
                Err(EmbedError::InvalidConfig(format!(
                    "hashing dim must be at least {MIN_HASHING_DIM}, got {}",
                    self.dim
                )))
            }
            EmbedderKind::Remote
                if self.endpoint_url.as_deref().is_none_or(str::is_empty)
                    || self.model_name.as_deref().is_none_or(str::is_empty) =>
            {
                Err(EmbedError::InvalidConfig(
                    "remote embedder needs endpoint_url and model_name".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Short human-readable description, stored alongside persisted indexes.
    pub fn describe(&self) -> String {
        match self.kind {
            EmbedderKind::Hashing => format!("hashing:{}", self.dim),
            EmbedderKind::Remote => {
                format!("remote:{}", self.model_name.as_deref().unwrap_or_default())
            }
        }
    }
}

/// Signed feature hashing over lowercase tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        EmbedderConfig::hashing(dim).validate()?;
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut acc = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            let h = fnv1a64(token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
        EmbeddingVector::from_f64(&acc)
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embedding: Vec<f64>,
}

/// Blocking client for a local embedding server.
#[derive(Debug)]
pub struct RemoteEmbedder {
    agent: ureq::Agent,
    url: String,
    model: String,
    max_retries: u32,
    retry_backoff: Duration,
    session_dim: Mutex<Option<usize>>,
    limit: InFlightLimit,
}

impl RemoteEmbedder {
    pub fn new(cfg: &EmbedderConfig) -> Result<Self, EmbedError> {
        cfg.validate()?;
        let base = cfg.endpoint_url.as_deref().unwrap_or_default();
        Ok(Self {
            agent: ureq::AgentBuilder::new().timeout(cfg.timeout).build(),
            url: format!("{}/api/embeddings", base.trim_end_matches('/')),
            model: cfg.model_name.clone().unwrap_or_default(),
            max_retries: cfg.max_retries,
            retry_backoff: cfg.retry_backoff,
            session_dim: Mutex::new(None),
            limit: InFlightLimit::new(REMOTE_MAX_IN_FLIGHT),
        })
    }

    /// Dimension observed on the first successful call, if any.
    pub fn dim(&self) -> Option<usize> {
        *self.session_dim.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let raw = {
            let _permit = self.limit.acquire();
            self.request_with_retry(text)?
        };
        if raw.is_empty() {
            return Err(EmbedError::RemoteMalformed("empty embedding".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::RemoteMalformed("non-finite component".into()));
        }
        {
            let mut dim = self.session_dim.lock().unwrap_or_else(|e| e.into_inner());
            match *dim {
                Some(d) if d != raw.len() => {
                    return Err(EmbedError::RemoteMalformed(format!(
                        "dimension changed from {d} to {}",
                        raw.len()
                    )))
                }
                Some(_) => {}
                None => *dim = Some(raw.len()),
            }
        }
        EmbeddingVector::from_f64(&raw)
    }

    fn request_with_retry(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let body = EmbeddingRequest {
            model: &self.model,
            prompt: text,
        };
        let mut attempt = 0;
        loop {
            match self.agent.post(&self.url).send_json(&body) {
                Ok(resp) => {
                    return resp
                        .into_json::<EmbeddingResponse>()
                        .map(|r| r.embedding)
                        .map_err(|e| EmbedError::RemoteMalformed(e.to_string()))
                }
                Err(ureq::Error::Status(code, _)) if (400..500).contains(&code) => {
                    return Err(EmbedError::RemoteMalformed(format!("HTTP {code}")))
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(EmbedError::RemoteUnavailable(format!("HTTP {code}")))
                }
                Err(ureq::Error::Transport(t)) => {
                    if attempt >= self.max_retries {
                        return Err(EmbedError::RemoteUnavailable(t.to_string()));
                    }
                    std::thread::sleep(self.retry_backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

/// An embedder handle built from [`EmbedderConfig`].
#[derive(Debug)]
pub enum Embedder {
    Hashing(HashingEmbedder),
    Remote(RemoteEmbedder),
}

impl Embedder {
    pub fn new(cfg: &EmbedderConfig) -> Result<Self, EmbedError> {
        cfg.validate()?;
        Ok(match cfg.kind {
            EmbedderKind::Hashing => Self::Hashing(HashingEmbedder::new(cfg.dim)?),
            EmbedderKind::Remote => Self::Remote(RemoteEmbedder::new(cfg)?),
        })
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        match self {
            Self::Hashing(h) => h.embed(text),
            Self::Remote(r) => r.embed(text),
        }
    }

    /// Embeds every text, preserving order. On failure the error of the
    /// lowest failing index is returned.
    pub fn embed_batch<S: AsRef<str> + Sync>(
        &self,
        texts: &[S],
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let tag = |index: usize| {
            move |source| EmbedError::Batch {
                index,
                source: Box::new(source),
            }
        };
        match self {
            Self::Hashing(h) => {
                let results: Vec<Result<EmbeddingVector, EmbedError>> =
                    maybe_par_map!(texts, |t| h.embed(t.as_ref()));
                results
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| r.map_err(tag(i)))
                    .collect()
            }
            // Sequential and fail-fast: one dead server should not cost a
            // full retry cycle per text.
            Self::Remote(r) => texts
                .iter()
                .enumerate()
                .map(|(i, t)| r.embed(t.as_ref()).map_err(tag(i)))
                .collect(),
        }
    }

    /// Fixed dimension for hashing; for remote, the dimension seen so far.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Hashing(h) => Some(h.dim()),
            Self::Remote(r) => r.dim(),
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, Self::Remote(_))
    }
}
