//! The verse dataset: CSV ingestion, validation and tag lookups.
//!
//! File format (UTF-8, RFC 4180 quoting):
//!
//! ```text
//! sanskrit,marathi,english,tags
//! "धर्मो रक्षति रक्षितः ।","…","Dharma protects those who protect it.",duty;righteousness
//! ```
//!
//! The `tags` cell uses `;` between tags. Tags are trimmed and lowercased on
//! ingest. Row order defines verse ids, starting at 0.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fnv::fnv1a64;
use crate::transliteration::devanagari_ratio;

pub const CSV_HEADER: [&str; 4] = ["sanskrit", "marathi", "english", "tags"];

/// Minimum share of non-whitespace codepoints that must be Devanagari.
pub const MIN_DEVANAGARI_RATIO: f64 = 0.5;

const TAG_DELIMITER: char = ';';

/// Sample corpus shipped with the crate. It is a hand-assembled stand-in
/// for demos and tests, not a curated research dataset.
pub const BUNDLED_CSV: &str = include_str!("../data/subhashitas.csv");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    MissingFile(PathBuf),
    #[error("failed to read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: expected `{}`, found `{found}`", CSV_HEADER.join(","))]
    MalformedHeader { found: String },
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("corpus has no verses")]
    EmptyCorpus,
}

/// Row-order identifier of a verse within its corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerseId(pub u32);

impl VerseId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VerseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerseRecord {
    pub id: VerseId,
    pub devanagari: String,
    pub marathi: String,
    pub english: String,
    /// Lowercase, deduplicated, in first-seen order.
    pub tags: Vec<String>,
}

impl VerseRecord {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Text handed to the embedder: the English rendering followed by the
    /// theme tags, so that English queries and tag vocabulary share a space
    /// with the verse.
    pub fn embedding_document(&self) -> String {
        format!("{}. themes: {}", self.english, self.tags.join(", "))
    }

    /// Text indexed by the keyword baseline: same fields as the embedding
    /// document, without the template words.
    pub fn keyword_document(&self) -> String {
        format!("{} {}", self.english, self.tags.join(", "))
    }
}

/// One unit of embeddable text. Verses are short, so there is exactly one
/// chunk per verse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextChunk {
    pub verse_id: VerseId,
    pub text: String,
}

pub fn chunk_text(verse: &VerseRecord) -> Vec<TextChunk> {
    vec![TextChunk {
        verse_id: verse.id,
        text: verse.embedding_document(),
    }]
}

/// An immutable, validated collection of verses.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    verses: Vec<VerseRecord>,
    tag_counts: BTreeMap<String, usize>,
    fingerprint: u64,
}

impl Corpus {
    /// Builds a corpus from already-validated records, reassigning ids in
    /// list order.
    pub fn from_records(records: Vec<VerseRecord>) -> Result<Self, CorpusError> {
        if records.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let verses: Vec<VerseRecord> = records
            .into_iter()
            .enumerate()
            .map(|(i, mut v)| {
                v.id = VerseId(i as u32);
                v
            })
            .collect();
        let tag_counts = count_tags(&verses);
        let mut corpus = Corpus {
            verses,
            tag_counts,
            fingerprint: 0,
        };
        corpus.fingerprint = fnv1a64(corpus.to_csv().as_bytes());
        Ok(corpus)
    }

    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_CSV).expect("bundled corpus is valid")
    }

    pub fn from_csv_str(text: &str) -> Result<Self, CorpusError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);

        let mut records = rdr.byte_records();
        let header = match records.next() {
            Some(Ok(h)) => h,
            Some(Err(e)) => return Err(csv_error(e, 1)),
            None => {
                return Err(CorpusError::MalformedHeader {
                    found: String::new(),
                })
            }
        };
        let header_fields: Vec<String> = header
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let s = String::from_utf8_lossy(f);
                if i == 0 {
                    s.trim_start_matches('\u{feff}').to_string()
                } else {
                    s.into_owned()
                }
            })
            .collect();
        if header_fields != CSV_HEADER {
            return Err(CorpusError::MalformedHeader {
                found: header_fields.join(","),
            });
        }

        let mut verses = Vec::new();
        for (row_index, result) in records.enumerate() {
            let fallback_line = row_index as u64 + 2;
            let record = result.map_err(|e| csv_error(e, fallback_line))?;
            let line = record.position().map(|p| p.line()).unwrap_or(fallback_line);
            let id = VerseId(verses.len() as u32);
            verses.push(parse_row(&record, line, id)?);
        }
        Self::from_records(verses)
    }

    pub fn verses(&self) -> &[VerseRecord] {
        &self.verses
    }

    pub fn len(&self) -> usize {
        self.verses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verses.is_empty()
    }

    pub fn get(&self, id: VerseId) -> Option<&VerseRecord> {
        self.verses.get(id.index())
    }

    pub fn tag_counts(&self) -> &BTreeMap<String, usize> {
        &self.tag_counts
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tag_counts.contains_key(tag)
    }

    /// FNV-1a 64 of the canonical CSV serialization.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        format!("{:016x}", self.fingerprint)
    }

    pub fn verses_by_tag(&self, tag: &str) -> Vec<&VerseRecord> {
        self.verses.iter().filter(|v| v.has_tag(tag)).collect()
    }

    /// Serializes back to the ingest format.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        wtr.write_record(CSV_HEADER).expect("in-memory write");
        for v in &self.verses {
            let tags = v.tags.join(&TAG_DELIMITER.to_string());
            wtr.write_record([&v.devanagari, &v.marathi, &v.english, &tags])
                .expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CorpusError::MissingFile(path.to_path_buf()),
        _ => CorpusError::Io(e),
    })?;
    Corpus::from_reader(std::io::BufReader::new(file))
}

fn csv_error(err: csv::Error, fallback_line: u64) -> CorpusError {
    let line = err.position().map(|p| p.line()).unwrap_or(fallback_line);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => CorpusError::Io(e),
        other => CorpusError::Row {
            line,
            reason: format!("{other:?}"),
        },
    }
}

fn parse_row(record: &csv::ByteRecord, line: u64, id: VerseId) -> Result<VerseRecord, CorpusError> {
    let row_err = |reason: String| CorpusError::Row { line, reason };
    if record.len() != CSV_HEADER.len() {
        return Err(row_err(format!(
            "expected {} fields, found {}",
            CSV_HEADER.len(),
            record.len()
        )));
    }
    let mut fields = Vec::with_capacity(4);
    for (i, raw) in record.iter().enumerate() {
        let text = std::str::from_utf8(raw)
            .map_err(|_| row_err(format!("field `{}` is not valid UTF-8", CSV_HEADER[i])))?;
        fields.push(text.trim().to_string());
    }
    let [devanagari, marathi, english, tag_cell]: [String; 4] =
        fields.try_into().expect("length checked above");

    if devanagari.is_empty() {
        return Err(row_err("sanskrit is empty".into()));
    }
    if devanagari_ratio(&devanagari) < MIN_DEVANAGARI_RATIO {
        return Err(row_err("not Devanagari".into()));
    }
    if english.is_empty() {
        return Err(row_err("english is empty".into()));
    }
    let tags = parse_tags(&tag_cell);
    if tags.is_empty() {
        return Err(row_err("tags is empty".into()));
    }

    Ok(VerseRecord {
        id,
        devanagari,
        marathi,
        english,
        tags,
    })
}

fn parse_tags(cell: &str) -> Vec<String> {
    let mut tags: Vec<String> = Vec::new();
    for tag in cell.split(TAG_DELIMITER) {
        let tag = tag.trim().to_lowercase();
        if !tag.is_empty() && !tags.contains(&tag) {
            tags.push(tag);
        }
    }
    tags
}

fn count_tags(verses: &[VerseRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for tag in verses.iter().flat_map(|v| v.tags.iter()) {
        *counts.entry(tag.clone()).or_insert(0) += 1;
    }
    counts
}
