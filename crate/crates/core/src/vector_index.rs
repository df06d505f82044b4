//! Exact top-k inner-product search over unit vectors.
//!
//! Every query scans all entries. Each scan chunk keeps its own bounded
//! selection of the best `k` hits and the chunk winners are merged, so the
//! parallel and sequential paths return identical lists.
//!
//! # File format
//!
//! Little-endian throughout:
//!
//! ```text
//! "PRGX"            4 bytes magic
//! version  u8       = 1
//! dim      u32
//! count    u32
//! count × (verse_id u32, dim × f32)
//! crc32    u32      over every preceding byte
//! ```

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::VerseId;
use crate::embedding::{dot, EmbeddingVector};
use crate::par::maybe_par_map;

pub const MAGIC: &[u8; 4] = b"PRGX";
pub const FORMAT_VERSION: u8 = 1;
/// Allowed deviation of a stored vector's norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-5;

const HEADER_LEN: usize = 4 + 1 + 4 + 4;
const CHECKSUM_LEN: usize = 4;
/// Entries per scan chunk on the parallel path.
const SCAN_CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("vector for id {id} has dimension {found}, index expects {expected}")]
    DimensionMismatch {
        id: u32,
        expected: usize,
        found: usize,
    },
    #[error("duplicate id {0}")]
    DuplicateId(u32),
    #[error("vector for id {0} is not unit length")]
    NotNormalized(u32),
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u8),
    #[error("index file truncated or corrupt: {0}")]
    TruncatedFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub verse_id: VerseId,
    pub score: f64,
}

impl ScoredHit {
    /// Descending score, then ascending id.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.verse_id.cmp(&other.verse_id))
    }
}

/// Heap key where `Greater` means a better hit.
#[derive(Clone, Copy, PartialEq)]
struct Better(ScoredHit);

impl Eq for Better {}

impl PartialOrd for Better {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Better {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.rank_cmp(&self.0)
    }
}

/// Which scan strategy [`VectorIndex::search_with`] uses. `Parallel` falls
/// back to `Sequential` when the crate is built without the `parallel`
/// feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<VerseId>,
    /// Row-major, `ids.len() × dim`.
    data: Vec<f32>,
}

impl VectorIndex {
    pub fn build(
        dim: usize,
        items: impl IntoIterator<Item = (VerseId, EmbeddingVector)>,
    ) -> Result<Self, IndexError> {
        let mut seen = HashSet::new();
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, vector) in items {
            if vector.dim() != dim {
                return Err(IndexError::DimensionMismatch {
                    id: id.0,
                    expected: dim,
                    found: vector.dim(),
                });
            }
            if !seen.insert(id) {
                return Err(IndexError::DuplicateId(id.0));
            }
            if (vector.norm() - 1.0).abs() > NORM_TOLERANCE {
                return Err(IndexError::NotNormalized(id.0));
            }
            ids.push(id);
            data.extend_from_slice(vector.values());
        }
        Ok(Self { dim, ids, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[VerseId] {
        &self.ids
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (VerseId, &[f32])> + '_ {
        self.ids
            .iter()
            .copied()
            .zip(self.data.chunks_exact(self.dim.max(1)))
    }

    /// Top `min(k, n)` hits by inner product, best first, ties by ascending id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredHit>, IndexError> {
        let exec = if self.len() >= 2 * SCAN_CHUNK {
            Execution::Parallel
        } else {
            Execution::Sequential
        };
        self.search_with(query, k, exec)
    }

    pub fn search_with(
        &self,
        query: &EmbeddingVector,
        k: usize,
        exec: Execution,
    ) -> Result<Vec<ScoredHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                id: u32::MAX,
                expected: self.dim,
                found: query.dim(),
            });
        }
        let q = query.values();
        let rows_per_chunk = SCAN_CHUNK;
        let top = match exec {
            Execution::Sequential => self.scan(q, k, 0, self.len()),
            Execution::Parallel => {
                let row_starts: Vec<usize> = (0..self.len()).step_by(rows_per_chunk).collect();
                let partials: Vec<Vec<ScoredHit>> = maybe_par_map!(row_starts, |&start| {
                    self.scan(q, k, start, (start + rows_per_chunk).min(self.len()))
                });
                let mut merged: Vec<ScoredHit> = partials.into_iter().flatten().collect();
                merged.sort_by(ScoredHit::rank_cmp);
                merged.truncate(k);
                merged
            }
        };
        Ok(top)
    }

    fn scan(&self, query: &[f32], k: usize, from: usize, to: usize) -> Vec<ScoredHit> {
        let mut heap: BinaryHeap<Reverse<Better>> = BinaryHeap::with_capacity(k + 1);
        for row in from..to {
            let hit = ScoredHit {
                verse_id: self.ids[row],
                score: dot(query, self.vector(row)),
            };
            if heap.len() < k {
                heap.push(Reverse(Better(hit)));
            } else if let Some(Reverse(worst)) = heap.peek() {
                if Better(hit) > *worst {
                    heap.pop();
                    heap.push(Reverse(Better(hit)));
                }
            }
        }
        let mut hits: Vec<ScoredHit> = heap.into_iter().map(|Reverse(Better(h))| h).collect();
        hits.sort_by(ScoredHit::rank_cmp);
        hits
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf =
            Vec::with_capacity(HEADER_LEN + self.len() * (4 + 4 * self.dim) + CHECKSUM_LEN);
        buf.extend_from_slice(MAGIC);
        buf.push(FORMAT_VERSION);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (id, vector) in self.iter() {
            buf.extend_from_slice(&id.0.to_le_bytes());
            for v in vector {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
            return Err(IndexError::BadMagic);
        }
        if bytes.len() < 5 {
            return Err(IndexError::TruncatedFile("missing version".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion(bytes[4]));
        }
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(IndexError::TruncatedFile("header too short".into()));
        }
        let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let dim = read_u32(5) as usize;
        let count = read_u32(9) as usize;
        let record_len = 4 + 4 * dim;
        let expected = count
            .checked_mul(record_len)
            .and_then(|r| r.checked_add(HEADER_LEN + CHECKSUM_LEN))
            .ok_or_else(|| IndexError::TruncatedFile("implausible header".into()))?;
        if bytes.len() != expected {
            return Err(IndexError::TruncatedFile(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let payload = &bytes[..expected - CHECKSUM_LEN];
        let stored_crc = read_u32(expected - CHECKSUM_LEN);
        if crc32fast::hash(payload) != stored_crc {
            return Err(IndexError::TruncatedFile("checksum mismatch".into()));
        }

        let mut items = Vec::with_capacity(count);
        for record in payload[HEADER_LEN..].chunks_exact(record_len) {
            let id = u32::from_le_bytes(record[..4].try_into().unwrap());
            let values: Vec<f32> = record[4..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let vector = EmbeddingVector::from_unit(values, NORM_TOLERANCE)
                .ok_or(IndexError::NotNormalized(id))?;
            items.push((VerseId(id), vector));
        }
        Self::build(dim, items)
    }

    /// Writes to a temporary sibling file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut file = std::fs::File::create(&tmp)?;
            file.write_all(&self.to_bytes())?;
            file.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
