//! Query pipeline: embed → retrieve top-k → join verses → prompt → generate.
//!
//! Retrieval never depends on generation. If the generator is missing or
//! fails, the response still carries the verses, with `explanation` absent
//! and `degraded` set.

use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, VerseId, VerseRecord};
use crate::embedding::{EmbedError, Embedder};
use crate::fnv::fnv1a64;
use crate::keyword_index::{KeywordError, KeywordIndex};
use crate::limit::InFlightLimit;
use crate::transliteration::transliterate;
use crate::vector_index::{IndexError, ScoredHit, VectorIndex};
use crate::DEFAULT_K;

pub const MAX_K: usize = 20;
pub const DEFAULT_GENERATION_TIMEOUT: Duration = Duration::from_secs(60);
/// Concurrent generation calls allowed per generator handle.
pub const GENERATOR_MAX_IN_FLIGHT: usize = 2;

pub const ENV_GEN_URL: &str = "PRAGYA_GEN_URL";
pub const ENV_GEN_MODEL: &str = "PRAGYA_GEN_MODEL";

pub const DEFAULT_PROMPT_TEMPLATE: &str = "You are a Sanskrit scholar. A user asks: {query}\n\
Relevant Subhāṣitas:\n\
{verses}\n\
Explain in 3-5 sentences how these verses address the user's question, in modern, accessible language.";

const QUERY_SLOT: &str = "{query}";
const VERSES_SLOT: &str = "{verses}";

#[derive(Debug, Error)]
pub enum RagError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("k must be between 1 and {MAX_K}, got {0}")]
    InvalidK(usize),
    #[error("index returned verse {0}, which is not in the corpus")]
    IndexCorpusMismatch(VerseId),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Keyword(#[from] KeywordError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("no verses to put in the prompt")]
    NoVerses,
    #[error("prompt template must contain {{query}} and {{verses}}")]
    BadTemplate,
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("generation server unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("generation server returned an unexpected response: {0}")]
    RemoteMalformed(String),
    #[error("generation server returned an empty response")]
    EmptyGeneration,
    #[error("prompt is empty")]
    EmptyPrompt,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    #[default]
    Semantic,
    Keyword,
}

impl std::fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Semantic => "semantic",
            Self::Keyword => "keyword",
        })
    }
}

impl std::str::FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "semantic" => Ok(Self::Semantic),
            "keyword" => Ok(Self::Keyword),
            other => Err(format!(
                "unknown mode `{other}` (expected semantic|keyword)"
            )),
        }
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_generate() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub text: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub mode: RetrievalMode,
    #[serde(default = "default_generate")]
    pub generate: bool,
}

impl QueryRequest {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            k: DEFAULT_K,
            mode: RetrievalMode::Semantic,
            generate: true,
        }
    }

    pub fn validate(&self) -> Result<(), RagError> {
        if self.text.trim().is_empty() {
            return Err(RagError::EmptyQuery);
        }
        if !(1..=MAX_K).contains(&self.k) {
            return Err(RagError::InvalidK(self.k));
        }
        Ok(())
    }
}

/// A verse as shown to users: script, romanization, both translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersePresentation {
    pub verse_id: VerseId,
    pub devanagari: String,
    pub iast: String,
    pub marathi: String,
    pub english: String,
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

impl VersePresentation {
    pub fn from_verse(verse: &VerseRecord) -> Self {
        Self {
            verse_id: verse.id,
            devanagari: verse.devanagari.clone(),
            iast: transliterate(&verse.devanagari),
            marathi: verse.marathi.clone(),
            english: verse.english.clone(),
            tags: verse.tags.clone(),
            score: None,
            rank: None,
        }
    }

    pub fn ranked(verse: &VerseRecord, score: f64, rank: usize) -> Self {
        Self {
            score: Some(score),
            rank: Some(rank),
            ..Self::from_verse(verse)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagResponse {
    pub results: Vec<VersePresentation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    pub retrieval_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_ms: Option<f64>,
    pub mode: RetrievalMode,
    /// Generation was requested but did not produce an explanation.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub timeout: Duration,
    /// Verses passed to the prompt; `None` means all `k` retrieved.
    pub max_context_verses: Option<usize>,
    pub prompt_template: String,
}

impl GeneratorConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            timeout: DEFAULT_GENERATION_TIMEOUT,
            max_context_verses: None,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
        }
    }

    /// From `PRAGYA_GEN_URL` / `PRAGYA_GEN_MODEL`, when both are set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_GEN_URL).ok()?;
        let model = std::env::var(ENV_GEN_MODEL).ok()?;
        Some(Self::new(url, model))
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        check_template(&self.prompt_template)
    }
}

fn check_template(template: &str) -> Result<(), PromptError> {
    if template.contains(QUERY_SLOT) && template.contains(VERSES_SLOT) {
        Ok(())
    } else {
        Err(PromptError::BadTemplate)
    }
}

pub fn render_verse_line(verse: &VersePresentation) -> String {
    format!(
        "Verse {} ({}): {} — English: {}",
        verse.rank.unwrap_or(1),
        verse.iast,
        verse.devanagari,
        verse.english
    )
}

/// Fills `{query}` and `{verses}` in one pass, so text inside the query is
/// never itself treated as a placeholder.
pub fn build_prompt(
    query: &str,
    verses: &[VersePresentation],
    template: &str,
) -> Result<String, PromptError> {
    check_template(template)?;
    if verses.is_empty() {
        return Err(PromptError::NoVerses);
    }
    let verse_block = verses
        .iter()
        .map(render_verse_line)
        .collect::<Vec<_>>()
        .join("\n");

    let mut out = String::with_capacity(template.len() + query.len() + verse_block.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix(QUERY_SLOT) {
            out.push_str(query);
            rest = after;
        } else if let Some(after) = tail.strip_prefix(VERSES_SLOT) {
            out.push_str(&verse_block);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    stream: bool,
}

#[derive(Deserialize)]
struct GenerateResponse {
    response: String,
}

/// Blocking client for a local LLM server's `/api/generate`.
#[derive(Debug)]
pub struct Generator {
    config: GeneratorConfig,
    agent: ureq::Agent,
    url: String,
    limit: InFlightLimit,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self, PromptError> {
        config.validate()?;
        let url = format!("{}/api/generate", config.endpoint_url.trim_end_matches('/'));
        Ok(Self {
            agent: ureq::AgentBuilder::new().timeout(config.timeout).build(),
            url,
            limit: InFlightLimit::new(GENERATOR_MAX_IN_FLIGHT),
            config,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn generate_explanation(&self, prompt: &str) -> Result<String, GenerateError> {
        if prompt.trim().is_empty() {
            return Err(GenerateError::EmptyPrompt);
        }
        let body = GenerateRequest {
            model: &self.config.model_name,
            prompt,
            stream: false,
        };
        let _permit = self.limit.acquire();
        let resp = match self.agent.post(&self.url).send_json(&body) {
            Ok(resp) => resp,
            Err(ureq::Error::Status(code, _)) if (400..500).contains(&code) => {
                return Err(GenerateError::RemoteMalformed(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => {
                return Err(GenerateError::RemoteUnavailable(format!("HTTP {code}")))
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(GenerateError::RemoteUnavailable(t.to_string()))
            }
        };
        let parsed: GenerateResponse = resp.into_json().map_err(|e| {
            if e.kind() == std::io::ErrorKind::TimedOut {
                GenerateError::RemoteUnavailable(e.to_string())
            } else {
                GenerateError::RemoteMalformed(e.to_string())
            }
        })?;
        if parsed.response.trim().is_empty() {
            return Err(GenerateError::EmptyGeneration);
        }
        Ok(parsed.response)
    }
}

/// One retrieval arm. The evaluation harness drives both arms through this.
pub trait Retriever {
    fn mode(&self) -> RetrievalMode;
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<ScoredHit>, RagError>;
}

pub struct SemanticRetriever<'a> {
    pub embedder: &'a Embedder,
    pub index: &'a VectorIndex,
}

impl Retriever for SemanticRetriever<'_> {
    fn mode(&self) -> RetrievalMode {
        RetrievalMode::Semantic
    }

    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<ScoredHit>, RagError> {
        let q = self.embedder.embed(query)?;
        Ok(self.index.search(&q, k)?)
    }
}

pub struct KeywordRetriever<'a> {
    pub index: &'a KeywordIndex,
}

impl Retriever for KeywordRetriever<'_> {
    fn mode(&self) -> RetrievalMode {
        RetrievalMode::Keyword
    }

    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<ScoredHit>, RagError> {
        Ok(self.index.search(query, k)?)
    }
}

/// Embeds every verse's document and builds the flat index.
pub fn build_vector_index(corpus: &Corpus, embedder: &Embedder) -> Result<VectorIndex, RagError> {
    let docs: Vec<String> = corpus
        .verses()
        .iter()
        .map(VerseRecord::embedding_document)
        .collect();
    let vectors = embedder.embed_batch(&docs)?;
    let dim = vectors.first().map_or(0, |v| v.dim());
    let items = corpus.verses().iter().map(|v| v.id).zip(vectors);
    Ok(VectorIndex::build(dim, items)?)
}

/// Everything a query needs, built over a single corpus.
#[derive(Debug)]
pub struct RagPipeline {
    pub corpus: Corpus,
    pub vector_index: VectorIndex,
    pub keyword_index: KeywordIndex,
    pub embedder: Embedder,
    pub generator: Option<Generator>,
}

impl RagPipeline {
    pub fn build(
        corpus: Corpus,
        embedder: Embedder,
        generator: Option<Generator>,
    ) -> Result<Self, RagError> {
        let vector_index = build_vector_index(&corpus, &embedder)?;
        Self::with_index(corpus, vector_index, embedder, generator)
    }

    pub fn with_index(
        corpus: Corpus,
        vector_index: VectorIndex,
        embedder: Embedder,
        generator: Option<Generator>,
    ) -> Result<Self, RagError> {
        let keyword_index = KeywordIndex::build(&corpus)?;
        Ok(Self {
            corpus,
            vector_index,
            keyword_index,
            embedder,
            generator,
        })
    }

    pub fn semantic(&self) -> SemanticRetriever<'_> {
        SemanticRetriever {
            embedder: &self.embedder,
            index: &self.vector_index,
        }
    }

    pub fn keyword(&self) -> KeywordRetriever<'_> {
        KeywordRetriever {
            index: &self.keyword_index,
        }
    }

    pub fn retrieve(
        &self,
        text: &str,
        k: usize,
        mode: RetrievalMode,
    ) -> Result<Vec<ScoredHit>, RagError> {
        match mode {
            RetrievalMode::Semantic => self.semantic().retrieve(text, k),
            RetrievalMode::Keyword => self.keyword().retrieve(text, k),
        }
    }

    pub fn present(&self, hits: &[ScoredHit]) -> Result<Vec<VersePresentation>, RagError> {
        hits.iter()
            .enumerate()
            .map(|(i, hit)| {
                let verse = self
                    .corpus
                    .get(hit.verse_id)
                    .ok_or(RagError::IndexCorpusMismatch(hit.verse_id))?;
                Ok(VersePresentation::ranked(verse, hit.score, i + 1))
            })
            .collect()
    }

    pub fn answer_query(&self, req: &QueryRequest) -> Result<RagResponse, RagError> {
        req.validate()?;
        let started = Instant::now();
        let hits = self.retrieve(&req.text, req.k, req.mode)?;
        let results = self.present(&hits)?;
        let retrieval_ms = elapsed_ms(started);

        let mut response = RagResponse {
            results,
            explanation: None,
            retrieval_ms,
            generation_ms: None,
            mode: req.mode,
            degraded: false,
        };
        if !req.generate || response.results.is_empty() {
            return Ok(response);
        }
        let Some(generator) = &self.generator else {
            response.degraded = true;
            return Ok(response);
        };

        let context = generator
            .config()
            .max_context_verses
            .unwrap_or(req.k)
            .min(response.results.len());
        let prompt = match build_prompt(
            &req.text,
            &response.results[..context.max(1)],
            &generator.config().prompt_template,
        ) {
            Ok(p) => p,
            Err(e) => {
                tracing::warn!(error = %e, "prompt assembly failed");
                response.degraded = true;
                return Ok(response);
            }
        };
        let gen_started = Instant::now();
        let outcome = generator.generate_explanation(&prompt);
        response.generation_ms = Some(elapsed_ms(gen_started));
        match outcome {
            Ok(text) => response.explanation = Some(text),
            Err(e) => {
                tracing::warn!(error = %e, "generation failed, returning verses only");
                response.degraded = true;
            }
        }
        Ok(response)
    }
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Verse of the day: `fnv1a64("YYYY-MM-DD") mod corpus size`.
pub fn daily_verse_id(corpus_len: usize, date: NaiveDate) -> Option<VerseId> {
    if corpus_len == 0 {
        return None;
    }
    let key = date.format("%Y-%m-%d").to_string();
    Some(VerseId(
        (fnv1a64(key.as_bytes()) % corpus_len as u64) as u32,
    ))
}

pub fn daily_verse(corpus: &Corpus, date: NaiveDate) -> Result<VersePresentation, RagError> {
    let id = daily_verse_id(corpus.len(), date).ok_or(RagError::EmptyCorpus)?;
    let verse = corpus.get(id).ok_or(RagError::IndexCorpusMismatch(id))?;
    Ok(VersePresentation::ranked(verse, 1.0, 1))
}
