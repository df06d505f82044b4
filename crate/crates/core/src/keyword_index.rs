//! BM25 keyword baseline.
//!
//! ```text
//! idf(t)   = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score(d) = Σ_t idf(t) · tf·(k1 + 1) / (tf + k1·(1 - b + b·|d|/avgdl))
//! ```
//!
//! The sum runs over the distinct query tokens. Documents scoring 0 are not
//! returned.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::corpus::{Corpus, VerseId};
use crate::vector_index::ScoredHit;

#[derive(Debug, Error)]
pub enum KeywordError {
    #[error("cannot build a keyword index over an empty corpus")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    InvalidK,
}

/// Lowercases and splits on every non-alphanumeric codepoint.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub verse_id: VerseId,
    pub term_frequency: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: BTreeMap<VerseId, u32>,
    avg_doc_length: f64,
    params: Bm25Params,
}

impl KeywordIndex {
    pub fn build(corpus: &Corpus) -> Result<Self, KeywordError> {
        Self::from_documents(
            corpus.verses().iter().map(|v| (v.id, v.keyword_document())),
            Bm25Params::default(),
        )
    }

    pub fn from_documents<I, S>(docs: I, params: Bm25Params) -> Result<Self, KeywordError>
    where
        I: IntoIterator<Item = (VerseId, S)>,
        S: AsRef<str>,
    {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for (id, text) in docs {
            let tokens = tokenize(text.as_ref());
            doc_lengths.insert(id, tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for token in tokens {
                *tf.entry(token).or_insert(0) += 1;
            }
            for (token, term_frequency) in tf {
                postings.entry(token).or_default().push(Posting {
                    verse_id: id,
                    term_frequency,
                });
            }
        }
        if doc_lengths.is_empty() {
            return Err(KeywordError::EmptyCorpus);
        }
        for list in postings.values_mut() {
            list.sort_by_key(|p| p.verse_id);
        }
        let total: u64 = doc_lengths.values().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(Self {
            postings,
            doc_lengths,
            avg_doc_length,
            params,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn doc_length(&self, id: VerseId) -> Option<u32> {
        self.doc_lengths.get(&id).copied()
    }

    pub fn idf(&self, token: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.postings(token).len() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredHit>, KeywordError> {
        if k == 0 {
            return Err(KeywordError::InvalidK);
        }
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();

        let Bm25Params { k1, b } = self.params;
        let mut scores: HashMap<VerseId, f64> = HashMap::new();
        for term in &terms {
            let idf = self.idf(term);
            for posting in self.postings(term) {
                let len = f64::from(self.doc_lengths[&posting.verse_id]);
                let tf = f64::from(posting.term_frequency);
                let norm = k1 * (1.0 - b + b * len / self.avg_doc_length);
                *scores.entry(posting.verse_id).or_insert(0.0) +=
                    idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let mut hits: Vec<ScoredHit> = scores
            .into_iter()
            .filter(|&(_, score)| score > 0.0)
            .map(|(verse_id, score)| ScoredHit { verse_id, score })
            .collect();
        hits.sort_by(ScoredHit::rank_cmp);
        hits.truncate(k);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::VerseRecord;

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("True friends, stay!"),
            vec!["true", "friends", "stay"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Mitra-labha 2"), vec!["mitra", "labha", "2"]);
        assert_eq!(tokenize("ŚĀNTI peace"), vec!["śānti", "peace"]);
    }

    fn corpus(rows: &[(&str, &[&str])]) -> Corpus {
        Corpus::from_records(
            rows.iter()
                .map(|(english, tags)| VerseRecord {
                    id: VerseId(0),
                    devanagari: "सत्यम्".into(),
                    marathi: String::new(),
                    english: english.to_string(),
                    tags: tags.iter().map(|t| t.to_string()).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_verse_postings() {
        let index = KeywordIndex::build(&corpus(&[("truth wins", &["truth"])])).unwrap();
        assert_eq!(
            index.postings("truth"),
            &[Posting {
                verse_id: VerseId(0),
                term_frequency: 2
            }]
        );
        assert_eq!(
            index.postings("wins"),
            &[Posting {
                verse_id: VerseId(0),
                term_frequency: 1
            }]
        );
        assert_eq!(index.doc_length(VerseId(0)), Some(3));
        assert_eq!(index.avg_doc_length(), 3.0);
    }

    #[test]
    fn duplicate_documents_share_postings() {
        let index =
            KeywordIndex::build(&corpus(&[("same text", &["a"]), ("same text", &["a"])])).unwrap();
        let ids: Vec<u32> = index
            .postings("same")
            .iter()
            .map(|p| p.verse_id.0)
            .collect();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn empty_documents_rejected() {
        let err =
            KeywordIndex::from_documents(Vec::<(VerseId, &str)>::new(), Bm25Params::default())
                .unwrap_err();
        assert!(matches!(err, KeywordError::EmptyCorpus));
    }

    #[test]
    fn no_match_and_single_doc() {
        let index = KeywordIndex::build(&corpus(&[("truth wins", &["truth"])])).unwrap();
        assert!(index.search("zebra", 3).unwrap().is_empty());
        let hits = index.search("wins", 3).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].verse_id, VerseId(0));
        assert!(hits[0].score > 0.0);
        assert!(matches!(
            index.search("wins", 0),
            Err(KeywordError::InvalidK)
        ));
    }

    #[test]
    fn repeated_query_terms_count_once() {
        let index = KeywordIndex::build(&corpus(&[("a b", &["x"]), ("b c", &["y"])])).unwrap();
        assert_eq!(
            index.search("b b b", 3).unwrap(),
            index.search("b", 3).unwrap()
        );
    }
}
