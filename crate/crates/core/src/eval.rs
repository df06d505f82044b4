//! Keyword vs semantic comparison on judged queries.
//!
//! A hit is relevant when the verse carries the query's expected tag.
//!
//! - top-k precision: mean over queries of relevant hits / min(k, hits
//!   returned); a query with no hits scores 0.
//! - coverage: share of queries with at least one relevant hit in the top k.
//! - latency: retrieval only. Each repetition yields a mean over queries; the
//!   reported value is the median of those means.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, VerseId};
use crate::rag::{QueryRequest, RagError, RagPipeline, RetrievalMode, Retriever};
use crate::vector_index::ScoredHit;

pub const DEFAULT_REPETITIONS: usize = 3;
pub const QUERIES_HEADER: [&str; 2] = ["query", "expected_tag"];
const CSV_COLUMNS: [&str; 10] = [
    "mode",
    "k",
    "n_queries",
    "topk_precision",
    "coverage",
    "mean_latency_ms",
    "end_to_end_latency_ms",
    "query",
    "hit_ids",
    "relevant_flags",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no judged queries")]
    NoQueries,
    #[error("expected tag `{0}` does not occur in the corpus")]
    TagNotInCorpus(String),
    #[error("verse {0} is not in the corpus")]
    UnknownVerseId(VerseId),
    #[error("k and repetitions must be at least 1")]
    InvalidParameter,
    #[error("query `{query}`: {source}")]
    Retrieval {
        query: String,
        #[source]
        source: RagError,
    },
    #[error("queries file: {0}")]
    QueriesFile(String),
    #[error("report csv: {0}")]
    ReportCsv(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedQuery {
    pub text: String,
    pub expected_tag: String,
}

impl JudgedQuery {
    pub fn new(text: impl Into<String>, expected_tag: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            expected_tag: expected_tag.into().trim().to_lowercase(),
        }
    }
}

/// Reads a `query,expected_tag` CSV.
pub fn load_judged_queries(path: impl AsRef<Path>) -> Result<Vec<JudgedQuery>, EvalError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| EvalError::QueriesFile(format!("{}: {e}", path.as_ref().display())))?;
    parse_judged_queries(&text)
}

pub fn parse_judged_queries(text: &str) -> Result<Vec<JudgedQuery>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| EvalError::QueriesFile(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != QUERIES_HEADER {
        return Err(EvalError::QueriesFile(format!(
            "expected header `{}`",
            QUERIES_HEADER.join(",")
        )));
    }
    let mut queries = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| EvalError::QueriesFile(e.to_string()))?;
        let (query, tag) = (record[0].trim(), record[1].trim());
        if query.is_empty() || tag.is_empty() {
            return Err(EvalError::QueriesFile(format!(
                "line {}: empty field",
                record.position().map_or(0, |p| p.line())
            )));
        }
        queries.push(JudgedQuery::new(query, tag));
    }
    Ok(queries)
}

pub fn judge_relevance(
    hit: &ScoredHit,
    query: &JudgedQuery,
    corpus: &Corpus,
) -> Result<bool, EvalError> {
    corpus
        .get(hit.verse_id)
        .map(|v| v.has_tag(&query.expected_tag))
        .ok_or(EvalError::UnknownVerseId(hit.verse_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDetail {
    pub query: String,
    pub hit_ids: Vec<VerseId>,
    pub relevant_flags: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub mode: RetrievalMode,
    pub topk_precision: f64,
    pub coverage: f64,
    pub mean_latency_ms: f64,
    /// Retrieval plus generation, when a generator was measured.
    pub end_to_end_latency_ms: Option<f64>,
    pub k: usize,
    pub n_queries: usize,
    pub per_query_detail: Vec<QueryDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub arms: Vec<ArmReport>,
}

impl EvalReport {
    pub fn arm(&self, mode: RetrievalMode) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.mode == mode)
    }

    pub fn arm_mut(&mut self, mode: RetrievalMode) -> Option<&mut ArmReport> {
        self.arms.iter_mut().find(|a| a.mode == mode)
    }
}

/// Headline precision and coverage from per-query relevance flags.
pub fn summarize(details: &[QueryDetail], k: usize) -> (f64, f64) {
    if details.is_empty() {
        return (0.0, 0.0);
    }
    let n = details.len() as f64;
    let mut precision_sum = 0.0;
    let mut covered = 0usize;
    for d in details {
        let flags = &d.relevant_flags[..d.relevant_flags.len().min(k)];
        if flags.is_empty() {
            continue;
        }
        let relevant = flags.iter().filter(|&&f| f).count();
        precision_sum += relevant as f64 / flags.len() as f64;
        if relevant > 0 {
            covered += 1;
        }
    }
    (precision_sum / n, covered as f64 / n)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

pub fn run_eval(
    queries: &[JudgedQuery],
    corpus: &Corpus,
    retrievers: &[&dyn Retriever],
    k: usize,
    repetitions: usize,
) -> Result<EvalReport, EvalError> {
    if queries.is_empty() {
        return Err(EvalError::NoQueries);
    }
    if k == 0 || repetitions == 0 {
        return Err(EvalError::InvalidParameter);
    }
    if let Some(q) = queries.iter().find(|q| !corpus.has_tag(&q.expected_tag)) {
        return Err(EvalError::TagNotInCorpus(q.expected_tag.clone()));
    }

    let mut arms = Vec::with_capacity(retrievers.len());
    for retriever in retrievers {
        let mut details = Vec::with_capacity(queries.len());
        let mut rep_means = Vec::with_capacity(repetitions);
        for rep in 0..repetitions {
            let mut total_ms = 0.0;
            for q in queries {
                let started = Instant::now();
                let hits =
                    retriever
                        .retrieve(&q.text, k)
                        .map_err(|source| EvalError::Retrieval {
                            query: q.text.clone(),
                            source,
                        })?;
                total_ms += started.elapsed().as_secs_f64() * 1000.0;
                if rep == 0 {
                    details.push(judge(q, &hits, k, corpus)?);
                }
            }
            rep_means.push(total_ms / queries.len() as f64);
        }
        let (topk_precision, coverage) = summarize(&details, k);
        arms.push(ArmReport {
            mode: retriever.mode(),
            topk_precision,
            coverage,
            mean_latency_ms: median(rep_means),
            end_to_end_latency_ms: None,
            k,
            n_queries: queries.len(),
            per_query_detail: details,
        });
    }
    Ok(EvalReport { arms })
}

fn judge(
    q: &JudgedQuery,
    hits: &[ScoredHit],
    k: usize,
    corpus: &Corpus,
) -> Result<QueryDetail, EvalError> {
    let top = &hits[..hits.len().min(k)];
    let relevant_flags = top
        .iter()
        .map(|h| judge_relevance(h, q, corpus))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QueryDetail {
        query: q.text.clone(),
        hit_ids: top.iter().map(|h| h.verse_id).collect(),
        relevant_flags,
    })
}

/// Mean wall-clock time of full semantic answers, generation included.
pub fn measure_end_to_end(
    pipeline: &RagPipeline,
    queries: &[JudgedQuery],
    k: usize,
) -> Result<f64, EvalError> {
    if queries.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mut total_ms = 0.0;
    for q in queries {
        let mut req = QueryRequest::new(q.text.clone());
        req.k = k;
        let started = Instant::now();
        pipeline
            .answer_query(&req)
            .map_err(|source| EvalError::Retrieval {
                query: q.text.clone(),
                source,
            })?;
        total_ms += started.elapsed().as_secs_f64() * 1000.0;
    }
    Ok(total_ms / queries.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Self::Table),
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!(
                "unknown format `{other}` (expected table|json|csv)"
            )),
        }
    }
}

pub fn arm_label(mode: RetrievalMode) -> &'static str {
    match mode {
        RetrievalMode::Keyword => "Keyword Search",
        RetrievalMode::Semantic => "Semantic Retrieval",
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(report),
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_table(report: &EvalReport) -> String {
    let k = report.arms.first().map_or(crate::DEFAULT_K, |a| a.k);
    let pct = |v: f64| format!("{:.1}%", v * 100.0);
    let ms = |v: f64| format!("{v:.3}");

    let mut rows: Vec<(String, Vec<String>)> = vec![
        (
            format!("Top-{k} Precision"),
            report.arms.iter().map(|a| pct(a.topk_precision)).collect(),
        ),
        (
            "Coverage (at least 1 relevant result)".into(),
            report.arms.iter().map(|a| pct(a.coverage)).collect(),
        ),
        (
            "Latency per Query (ms, retrieval)".into(),
            report.arms.iter().map(|a| ms(a.mean_latency_ms)).collect(),
        ),
    ];
    if report
        .arms
        .iter()
        .any(|a| a.end_to_end_latency_ms.is_some())
    {
        rows.push((
            "Latency per Query (ms, end-to-end)".into(),
            report
                .arms
                .iter()
                .map(|a| a.end_to_end_latency_ms.map_or_else(|| "-".into(), ms))
                .collect(),
        ));
    }
    rows.push((
        "Queries".into(),
        report
            .arms
            .iter()
            .map(|a| a.n_queries.to_string())
            .collect(),
    ));

    let headers: Vec<&str> = report.arms.iter().map(|a| arm_label(a.mode)).collect();
    let label_w = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .max()
        .unwrap_or(0)
        .max(6);
    let col_w: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            rows.iter()
                .map(|(_, v)| v[i].len())
                .max()
                .unwrap_or(0)
                .max(h.len())
        })
        .collect();

    let mut out = String::new();
    let rule = |out: &mut String| {
        out.push('+');
        out.push_str(&"-".repeat(label_w + 2));
        for w in &col_w {
            out.push('+');
            out.push_str(&"-".repeat(w + 2));
        }
        out.push_str("+\n");
    };
    rule(&mut out);
    let _ = write!(out, "| {:<label_w$} ", "Metric");
    for (h, w) in headers.iter().zip(&col_w) {
        let _ = write!(out, "| {h:>w$} ");
    }
    out.push_str("|\n");
    rule(&mut out);
    for (label, values) in &rows {
        let _ = write!(out, "| {label:<label_w$} ");
        for (v, w) in values.iter().zip(&col_w) {
            let _ = write!(out, "| {v:>w$} ");
        }
        out.push_str("|\n");
    }
    rule(&mut out);
    out
}

fn join_ids(ids: &[VerseId]) -> String {
    ids.iter()
        .map(|i| i.0.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn join_flags(flags: &[bool]) -> String {
    flags
        .iter()
        .map(|&f| if f { "1" } else { "0" })
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per (arm, query); arm-level columns repeat on each of its rows.
fn render_csv(report: &EvalReport) -> String {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    wtr.write_record(CSV_COLUMNS).expect("in-memory write");
    for arm in &report.arms {
        for d in &arm.per_query_detail {
            wtr.write_record([
                arm.mode.to_string(),
                arm.k.to_string(),
                arm.n_queries.to_string(),
                arm.topk_precision.to_string(),
                arm.coverage.to_string(),
                arm.mean_latency_ms.to_string(),
                arm.end_to_end_latency_ms
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                d.query.clone(),
                join_ids(&d.hit_ids),
                join_flags(&d.relevant_flags),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Inverse of the CSV rendering.
pub fn parse_report_csv(text: &str) -> Result<EvalReport, EvalError> {
    let err = |m: String| EvalError::ReportCsv(m);
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| err(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_COLUMNS {
        return Err(err("unexpected header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
    let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("`{s}`: {e}")));

    let mut arms: Vec<ArmReport> = Vec::new();
    for record in rdr.records() {
        let r = record.map_err(|e| err(e.to_string()))?;
        let mode: RetrievalMode = r[0].parse().map_err(err)?;
        let hit_ids = split_list(&r[8])
            .map(|s| {
                s.parse::<u32>()
                    .map(VerseId)
                    .map_err(|e| err(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let relevant_flags = split_list(&r[9])
            .map(|s| match s {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(err(format!("bad flag `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let detail = QueryDetail {
            query: r[7].to_string(),
            hit_ids,
            relevant_flags,
        };
        match arms.last_mut() {
            Some(arm) if arm.mode == mode => arm.per_query_detail.push(detail),
            _ => arms.push(ArmReport {
                mode,
                k: int(&r[1])?,
                n_queries: int(&r[2])?,
                topk_precision: num(&r[3])?,
                coverage: num(&r[4])?,
                mean_latency_ms: num(&r[5])?,
                end_to_end_latency_ms: if r[6].is_empty() {
                    None
                } else {
                    Some(num(&r[6])?)
                },
                per_query_detail: vec![detail],
            }),
        }
    }
    Ok(EvalReport { arms })
}

fn split_list(cell: &str) -> impl Iterator<Item = &str> {
    cell.split(';').filter(|s| !s.is_empty())
}
