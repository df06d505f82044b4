//! Semantic recommendation of Sanskrit subhāṣitas.
//!
//! The crate is organised as a retrieval-augmented pipeline:
//!
//! - [`corpus`] loads and validates the verse CSV.
//! - [`embedding`] turns text into unit vectors, either through a remote
//!   model server or an offline feature-hashing embedder.
//! - [`vector_index`] performs exact top-k inner-product search and persists
//!   the index to disk.
//! - [`keyword_index`] is the BM25 keyword baseline.
//! - [`transliteration`] romanizes Devanagari to IAST.
//! - [`rag`] composes retrieval with prompt assembly and generation.
//! - [`eval`] compares the keyword and semantic arms on judged queries.
//! - [`service`] and [`cli`] expose everything over HTTP and the command line.
//!
//! With the default `parallel` feature, the hot loops (flat search, batch
//! hashing) run on rayon. Without it every path is sequential and produces
//! identical results.

pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod fnv;
pub mod keyword_index;
mod limit;
mod par;
pub mod rag;
pub mod service;
pub mod transliteration;
pub mod vector_index;

pub use corpus::{Corpus, VerseId, VerseRecord};
pub use embedding::{Embedder, EmbedderConfig, EmbeddingVector};
pub use keyword_index::KeywordIndex;
pub use rag::{QueryRequest, RagResponse, RetrievalMode, VersePresentation};
pub use vector_index::{ScoredHit, VectorIndex};

/// Default number of hits returned by every retrieval path.
pub const DEFAULT_K: usize = 3;
