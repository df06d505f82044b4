//! Configuration and application state shared by the HTTP server and CLI.
//!
//! Configuration layers, lowest to highest precedence: config file
//! (`key = value`), environment (`PRAGYA_*`), command-line flags.

mod http;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_corpus, Corpus, CorpusError};
use crate::embedding::{EmbedError, Embedder, EmbedderConfig, EmbedderKind, DEFAULT_HASHING_DIM};
use crate::rag::{
    build_vector_index, Generator, GeneratorConfig, PromptError, RagError, RagPipeline,
};
use crate::vector_index::{IndexError, VectorIndex};

pub use http::{router, run_server, serve, CORPUS_HASH_HEADER};

pub const DEFAULT_PORT: u16 = 8080;
pub const ENV_PORT: &str = "PRAGYA_PORT";
pub const ENV_CORPUS: &str = "PRAGYA_CORPUS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("invalid value for {key}: {message}")]
    Value { key: &'static str, message: String },
    #[error(transparent)]
    Embedder(#[from] EmbedError),
    #[error(transparent)]
    Template(#[from] PromptError),
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("failed to build index: {0}")]
    Build(#[from] RagError),
    #[error("index {path} does not match the corpus: {reason}")]
    IndexMismatch { path: PathBuf, reason: String },
    #[error("cannot bind port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Server(#[from] std::io::Error),
}

/// One layer of optional settings. Missing keys defer to lower layers.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub port: Option<u16>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub embedder: Option<EmbedderKind>,
    pub embed_url: Option<String>,
    pub embed_model: Option<String>,
    pub embed_dim: Option<usize>,
    pub embed_timeout_secs: Option<u64>,
    pub gen_url: Option<String>,
    pub gen_model: Option<String>,
    pub gen_timeout_secs: Option<u64>,
    pub prompt_template: Option<String>,
    pub cors_origin: Option<String>,
}

impl ConfigLayer {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let file_err = |message: String| ConfigError::File {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        Self::from_toml_str(&text).map_err(file_err)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_vars(|key| std::env::var(key).ok())
    }

    /// Reads the `PRAGYA_*` variables through `get`, so tests need not touch
    /// the process environment.
    pub fn from_vars(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let port = get(ENV_PORT)
            .map(|p| {
                p.parse::<u16>().map_err(|e| ConfigError::Value {
                    key: ENV_PORT,
                    message: e.to_string(),
                })
            })
            .transpose()?;
        Ok(Self {
            port,
            corpus: get(ENV_CORPUS).map(PathBuf::from),
            embed_url: get(crate::embedding::ENV_EMBED_URL),
            embed_model: get(crate::embedding::ENV_EMBED_MODEL),
            gen_url: get(crate::rag::ENV_GEN_URL),
            gen_model: get(crate::rag::ENV_GEN_MODEL),
            ..Self::default()
        })
    }

    /// Returns `self` with every key set in `higher` replaced.
    pub fn merge(self, higher: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            port: higher.port.or(self.port),
            corpus: higher.corpus.or(self.corpus),
            index: higher.index.or(self.index),
            embedder: higher.embedder.or(self.embedder),
            embed_url: higher.embed_url.or(self.embed_url),
            embed_model: higher.embed_model.or(self.embed_model),
            embed_dim: higher.embed_dim.or(self.embed_dim),
            embed_timeout_secs: higher.embed_timeout_secs.or(self.embed_timeout_secs),
            gen_url: higher.gen_url.or(self.gen_url),
            gen_model: higher.gen_model.or(self.gen_model),
            gen_timeout_secs: higher.gen_timeout_secs.or(self.gen_timeout_secs),
            prompt_template: higher.prompt_template.or(self.prompt_template),
            cors_origin: higher.cors_origin.or(self.cors_origin),
        }
    }

    pub fn embedder_config(&self) -> Result<EmbedderConfig, ConfigError> {
        let kind =
            self.embedder
                .unwrap_or(if self.embed_url.is_some() && self.embed_model.is_some() {
                    EmbedderKind::Remote
                } else {
                    EmbedderKind::Hashing
                });
        let mut cfg = match kind {
            EmbedderKind::Hashing => {
                EmbedderConfig::hashing(self.embed_dim.unwrap_or(DEFAULT_HASHING_DIM))
            }
            EmbedderKind::Remote => EmbedderConfig {
                endpoint_url: self.embed_url.clone(),
                model_name: self.embed_model.clone(),
                ..EmbedderConfig::remote("", "")
            },
        };
        if let Some(secs) = self.embed_timeout_secs {
            cfg.timeout = Duration::from_secs(secs);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn generator_config(&self) -> Result<Option<GeneratorConfig>, ConfigError> {
        let (Some(url), Some(model)) = (&self.gen_url, &self.gen_model) else {
            return Ok(None);
        };
        let mut cfg = GeneratorConfig::new(url.clone(), model.clone());
        if let Some(secs) = self.gen_timeout_secs {
            cfg.timeout = Duration::from_secs(secs);
        }
        if let Some(template) = &self.prompt_template {
            cfg.prompt_template = template.clone();
        }
        cfg.validate()?;
        Ok(Some(cfg))
    }

    pub fn resolve(&self) -> Result<ServiceConfig, ConfigError> {
        let port = self.port.unwrap_or(DEFAULT_PORT);
        if port == 0 {
            return Err(ConfigError::Value {
                key: "port",
                message: "must be in 1..=65535".into(),
            });
        }
        Ok(ServiceConfig {
            port,
            corpus_path: self.corpus.clone(),
            index_path: self.index.clone(),
            embedder: self.embedder_config()?,
            generator: self.generator_config()?,
            cors_allowed_origin: self.cors_origin.clone().unwrap_or_else(|| "*".into()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub port: u16,
    /// `None` serves the bundled sample corpus.
    pub corpus_path: Option<PathBuf>,
    /// Loaded if present, otherwise built at startup and written here.
    pub index_path: Option<PathBuf>,
    pub embedder: EmbedderConfig,
    pub generator: Option<GeneratorConfig>,
    pub cors_allowed_origin: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ConfigLayer::default()
            .resolve()
            .expect("defaults are valid")
    }
}

pub fn load_corpus_or_bundled(path: Option<&Path>) -> Result<Corpus, CorpusError> {
    match path {
        Some(p) => load_corpus(p),
        None => Ok(Corpus::bundled()),
    }
}

/// Sidecar written next to an index file, tying it to a corpus and embedder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub corpus_hash: String,
    pub embedder: String,
    pub verses: usize,
    pub built_at: String,
}

impl IndexMeta {
    pub fn path_for(index_path: &Path) -> PathBuf {
        let mut name = index_path.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    pub fn write(&self, index_path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("meta serializes");
        std::fs::write(Self::path_for(index_path), json)
    }

    pub fn read(index_path: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(Self::path_for(index_path)).ok()?;
        serde_json::from_str(&text).ok()
    }
}

/// Builds the index for `corpus`, saves it with its sidecar, and returns it.
pub fn build_and_save_index(
    corpus: &Corpus,
    embedder: &Embedder,
    embedder_cfg: &EmbedderConfig,
    path: &Path,
) -> Result<VectorIndex, StartupError> {
    let index = build_vector_index(corpus, embedder)?;
    index.save(path)?;
    IndexMeta {
        corpus_hash: corpus.fingerprint_hex(),
        embedder: embedder_cfg.describe(),
        verses: corpus.len(),
        built_at: now_rfc3339(),
    }
    .write(path)?;
    Ok(index)
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Checks that a loaded index covers exactly the corpus' verse ids.
pub fn check_index_matches(index: &VectorIndex, corpus: &Corpus) -> Result<(), String> {
    if index.len() != corpus.len() {
        return Err(format!(
            "index has {} vectors, corpus has {} verses",
            index.len(),
            corpus.len()
        ));
    }
    if let Some(id) = index.ids().iter().find(|id| corpus.get(**id).is_none()) {
        return Err(format!("verse id {id} not in corpus"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BuildInfo {
    pub corpus_hash: String,
    pub built_at: String,
}

/// Immutable state behind every request.
#[derive(Debug)]
pub struct AppState {
    pub pipeline: RagPipeline,
    pub config: ServiceConfig,
    pub build_info: BuildInfo,
}

impl AppState {
    /// Loads the corpus, loads or builds the index, and wires the pipeline.
    pub fn startup(config: ServiceConfig) -> Result<Self, StartupError> {
        let corpus = load_corpus_or_bundled(config.corpus_path.as_deref())?;
        let embedder = Embedder::new(&config.embedder).map_err(ConfigError::from)?;
        let generator = config
            .generator
            .clone()
            .map(Generator::new)
            .transpose()
            .map_err(ConfigError::from)?;
        let corpus_hash = corpus.fingerprint_hex();

        let (index, built_at) = match &config.index_path {
            Some(path) if path.exists() => {
                let index = VectorIndex::load(path)?;
                let meta = IndexMeta::read(path);
                if let Some(meta) = &meta {
                    if meta.corpus_hash != corpus_hash {
                        return Err(StartupError::IndexMismatch {
                            path: path.clone(),
                            reason: format!(
                                "built for corpus {}, serving corpus {corpus_hash}",
                                meta.corpus_hash
                            ),
                        });
                    }
                }
                check_index_matches(&index, &corpus).map_err(|reason| {
                    StartupError::IndexMismatch {
                        path: path.clone(),
                        reason,
                    }
                })?;
                if let (Embedder::Hashing(h), false) =
                    (&embedder, index.dim() == embedder.dim().unwrap_or(0))
                {
                    return Err(StartupError::IndexMismatch {
                        path: path.clone(),
                        reason: format!(
                            "index dim {} but hashing embedder dim {}",
                            index.dim(),
                            h.dim()
                        ),
                    });
                }
                let built_at = meta.map_or_else(now_rfc3339, |m| m.built_at);
                (index, built_at)
            }
            Some(path) => {
                tracing::info!(path = %path.display(), "index missing, building");
                (
                    build_and_save_index(&corpus, &embedder, &config.embedder, path)?,
                    now_rfc3339(),
                )
            }
            None => (build_vector_index(&corpus, &embedder)?, now_rfc3339()),
        };

        let pipeline = RagPipeline::with_index(corpus, index, embedder, generator)?;
        Ok(Self {
            pipeline,
            config,
            build_info: BuildInfo {
                corpus_hash,
                built_at,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_override_in_order() {
        let file = ConfigLayer::from_toml_str(
            "port = 9000\ncorpus = \"a.csv\"\ncors_origin = \"http://x\"\n",
        )
        .unwrap();
        let env = ConfigLayer::from_vars(|k| match k {
            ENV_PORT => Some("9100".into()),
            _ => None,
        })
        .unwrap();
        let flags = ConfigLayer {
            corpus: Some("b.csv".into()),
            ..Default::default()
        };
        let merged = file.merge(env).merge(flags);
        assert_eq!(merged.port, Some(9100));
        assert_eq!(merged.corpus, Some(PathBuf::from("b.csv")));
        assert_eq!(merged.cors_origin.as_deref(), Some("http://x"));
    }

    #[test]
    fn unknown_key_and_bad_port() {
        assert!(ConfigLayer::from_toml_str("colour = 1").is_err());
        assert!(ConfigLayer::from_vars(|k| (k == ENV_PORT).then(|| "99999".into())).is_err());
        let layer = ConfigLayer {
            port: Some(0),
            ..Default::default()
        };
        assert!(layer.resolve().is_err());
    }

    #[test]
    fn embedder_selection() {
        let cfg = ConfigLayer::default().resolve().unwrap();
        assert_eq!(cfg.embedder.kind, EmbedderKind::Hashing);
        assert_eq!(cfg.port, DEFAULT_PORT);
        assert_eq!(cfg.cors_allowed_origin, "*");
        assert!(cfg.generator.is_none());

        let layer = ConfigLayer::from_vars(|k| match k {
            "PRAGYA_EMBED_URL" => Some("http://127.0.0.1:11434".into()),
            "PRAGYA_EMBED_MODEL" => Some("indic".into()),
            "PRAGYA_GEN_URL" => Some("http://127.0.0.1:11434".into()),
            "PRAGYA_GEN_MODEL" => Some("mistral".into()),
            _ => None,
        })
        .unwrap();
        let cfg = layer.resolve().unwrap();
        assert_eq!(cfg.embedder.kind, EmbedderKind::Remote);
        assert_eq!(cfg.generator.unwrap().model_name, "mistral");

        let forced = ConfigLayer {
            embedder: Some(EmbedderKind::Remote),
            ..Default::default()
        };
        assert!(forced.resolve().is_err());
    }

    #[test]
    fn template_without_placeholders_rejected() {
        let layer = ConfigLayer {
            gen_url: Some("http://x".into()),
            gen_model: Some("m".into()),
            prompt_template: Some("just {query}".into()),
            ..Default::default()
        };
        assert!(matches!(
            layer.resolve(),
            Err(ConfigError::Template(PromptError::BadTemplate))
        ));
    }

    #[test]
    fn startup_builds_then_reloads_index() {
        let dir = tempfile::tempdir().unwrap();
        let index_path = dir.path().join("verses.prgx");
        let config = ServiceConfig {
            index_path: Some(index_path.clone()),
            embedder: EmbedderConfig::hashing(64),
            ..ServiceConfig::default()
        };
        let first = AppState::startup(config.clone()).unwrap();
        assert!(index_path.exists());
        assert!(IndexMeta::path_for(&index_path).exists());
        let second = AppState::startup(config).unwrap();
        assert_eq!(first.pipeline.vector_index, second.pipeline.vector_index);
        assert_eq!(first.build_info.corpus_hash, second.build_info.corpus_hash);
    }

    #[test]
    fn startup_rejects_index_for_other_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let index_path = dir.path().join("verses.prgx");
        let corpus_path = dir.path().join("small.csv");
        std::fs::write(
            &corpus_path,
            "sanskrit,marathi,english,tags\nधर्मः,x,Duty,duty\n",
        )
        .unwrap();
        let base = ServiceConfig {
            index_path: Some(index_path),
            embedder: EmbedderConfig::hashing(64),
            ..ServiceConfig::default()
        };
        AppState::startup(base.clone()).unwrap();
        let other = ServiceConfig {
            corpus_path: Some(corpus_path),
            ..base
        };
        assert!(matches!(
            AppState::startup(other),
            Err(StartupError::IndexMismatch { .. })
        ));
    }
}
