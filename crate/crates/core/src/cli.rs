//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 domain error (bad corpus, unreachable server,
//! corrupt index), 2 usage error (bad flags or configuration).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::embedding::{Embedder, EmbedderKind};
use crate::eval::{load_judged_queries, measure_end_to_end, render_report, run_eval, ReportFormat};
use crate::rag::{
    daily_verse, QueryRequest, RagResponse, RetrievalMode, Retriever, VersePresentation, MAX_K,
};
use crate::service::{
    build_and_save_index, load_corpus_or_bundled, serve, AppState, ConfigError, ConfigLayer,
    ServiceConfig,
};
use crate::transliteration::transliterate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pragya",
    version,
    about = "Semantic search over Sanskrit subhashitas"
)]
pub struct Cli {
    /// Config file with `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Embed the corpus and write the vector index.
    Index {
        #[command(flatten)]
        source: SourceArgs,
        /// Output index file.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Retrieve verses for a query.
    Query {
        text: String,
        #[arg(short = 'k', long = "k", default_value_t = crate::DEFAULT_K)]
        k: usize,
        #[arg(long, default_value = "semantic", value_parser = parse_mode)]
        mode: RetrievalMode,
        /// Skip the generated explanation.
        #[arg(long)]
        no_generate: bool,
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, value_name = "ORIGIN")]
        cors_origin: Option<String>,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Compare keyword and semantic retrieval on judged queries.
    Eval {
        /// CSV with columns `query,expected_tag`.
        #[arg(long, value_name = "CSV")]
        queries: PathBuf,
        #[arg(short = 'k', long = "k", default_value_t = crate::DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = crate::eval::DEFAULT_REPETITIONS)]
        repetitions: usize,
        #[arg(long, default_value = "table", value_parser = parse_report_format)]
        format: ReportFormat,
        /// Also time full answers including generation.
        #[arg(long)]
        end_to_end: bool,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Romanize Devanagari text to IAST.
    Transliterate {
        text: String,
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
    },
    /// Show the verse of the day.
    Daily {
        /// Date as YYYY-MM-DD, default today (UTC).
        #[arg(long, value_parser = parse_date)]
        date: Option<NaiveDate>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
        #[arg(long, value_name = "CSV")]
        corpus: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Corpus CSV, default the bundled sample.
    #[arg(long, value_name = "CSV")]
    corpus: Option<PathBuf>,
    /// Index file to load, or to create if missing.
    #[arg(long, value_name = "FILE")]
    index: Option<PathBuf>,
    /// `hash` (offline) or `remote`.
    #[arg(long)]
    embedder: Option<EmbedderKind>,
    #[arg(long, value_name = "URL")]
    embed_url: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    /// Dimension of the hashing embedder.
    #[arg(long)]
    dim: Option<usize>,
}

impl SourceArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            corpus: self.corpus.clone(),
            index: self.index.clone(),
            embedder: self.embedder,
            embed_url: self.embed_url.clone(),
            embed_model: self.embed_model.clone(),
            embed_dim: self.dim,
            ..ConfigLayer::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

fn parse_mode(s: &str) -> Result<RetrievalMode, String> {
    s.parse()
}

fn parse_report_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("`{s}` is not a YYYY-MM-DD date"))
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn domain<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Domain(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_tracing(matches!(cli.command, Command::Serve { .. }));
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            EXIT_DOMAIN
        }
    }
}

fn init_tracing(verbose: bool) {
    let default = if verbose { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn layered(config_file: Option<&PathBuf>, flags: ConfigLayer) -> Result<ConfigLayer, Failure> {
    let file = match config_file {
        Some(path) => ConfigLayer::from_file(path)?,
        None => ConfigLayer::default(),
    };
    Ok(file.merge(ConfigLayer::from_env()?).merge(flags))
}

fn resolve(config_file: Option<&PathBuf>, flags: ConfigLayer) -> Result<ServiceConfig, Failure> {
    Ok(layered(config_file, flags)?.resolve()?)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let config_file = cli.config.as_ref();
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Index { source, out: path } => {
            let config = resolve(config_file, source.layer())?;
            let corpus = load_corpus_or_bundled(config.corpus_path.as_deref()).map_err(domain)?;
            let embedder = Embedder::new(&config.embedder).map_err(domain)?;
            let index = build_and_save_index(&corpus, &embedder, &config.embedder, &path)
                .map_err(domain)?;
            writeln!(
                out,
                "indexed {} verses (dim {}, {}) -> {}",
                index.len(),
                index.dim(),
                config.embedder.describe(),
                path.display()
            )
            .map_err(domain)
        }
        Command::Query {
            text,
            k,
            mode,
            no_generate,
            format,
            source,
        } => {
            if k == 0 || k > MAX_K {
                return Err(Failure::Usage(format!("-k must be between 1 and {MAX_K}")));
            }
            let config = resolve(config_file, source.layer())?;
            let state = AppState::startup(config).map_err(domain)?;
            let req = QueryRequest {
                text,
                k,
                mode,
                generate: !no_generate,
            };
            let response = state.pipeline.answer_query(&req).map_err(domain)?;
            match format {
                OutputFormat::Json => writeln!(out, "{}", to_json(&response)),
                OutputFormat::Text => write!(out, "{}", render_response(&response, !no_generate)),
            }
            .map_err(domain)
        }
        Command::Serve {
            port,
            cors_origin,
            source,
        } => {
            let flags = ConfigLayer {
                port,
                cors_origin,
                ..source.layer()
            };
            let config = resolve(config_file, flags)?;
            let runtime = tokio::runtime::Runtime::new().map_err(domain)?;
            runtime.block_on(serve(config)).map_err(domain)
        }
        Command::Eval {
            queries,
            k,
            repetitions,
            format,
            end_to_end,
            source,
        } => {
            if k == 0 || repetitions == 0 {
                return Err(Failure::Usage(
                    "--k and --repetitions must be at least 1".into(),
                ));
            }
            let config = resolve(config_file, source.layer())?;
            let queries = load_judged_queries(&queries).map_err(domain)?;
            let state = AppState::startup(config).map_err(domain)?;
            let pipeline = &state.pipeline;
            let keyword = pipeline.keyword();
            let semantic = pipeline.semantic();
            let arms: [&dyn Retriever; 2] = [&keyword, &semantic];
            let mut report =
                run_eval(&queries, &pipeline.corpus, &arms, k, repetitions).map_err(domain)?;
            if end_to_end {
                let ms = measure_end_to_end(pipeline, &queries, k).map_err(domain)?;
                if let Some(arm) = report.arm_mut(RetrievalMode::Semantic) {
                    arm.end_to_end_latency_ms = Some(ms);
                }
            }
            write!(out, "{}", render_report(&report, format)).map_err(domain)
        }
        Command::Transliterate { text, format } => {
            let iast = transliterate(&text);
            match format {
                OutputFormat::Json => writeln!(
                    out,
                    "{}",
                    serde_json::json!({ "input": text, "iast": iast })
                ),
                OutputFormat::Text => writeln!(out, "{iast}"),
            }
            .map_err(domain)
        }
        Command::Daily {
            date,
            format,
            corpus,
        } => {
            let flags = ConfigLayer {
                corpus,
                ..ConfigLayer::default()
            };
            let layer = layered(config_file, flags)?;
            let corpus = load_corpus_or_bundled(layer.corpus.as_deref()).map_err(domain)?;
            let date = date.unwrap_or_else(|| chrono::Utc::now().date_naive());
            let verse = daily_verse(&corpus, date).map_err(domain)?;
            match format {
                OutputFormat::Json => writeln!(out, "{}", to_json(&verse)),
                OutputFormat::Text => write!(out, "{date}\n{}", render_verse(&verse)),
            }
            .map_err(domain)
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("response serializes")
}

fn render_verse(v: &VersePresentation) -> String {
    let mut s = String::new();
    match (v.rank, v.score) {
        (Some(rank), Some(score)) => {
            s.push_str(&format!("{rank}. [{}] score {score:.4}\n", v.verse_id))
        }
        _ => s.push_str(&format!("[{}]\n", v.verse_id)),
    }
    for line in v.devanagari.lines() {
        s.push_str(&format!("   {line}\n"));
    }
    s.push_str(&format!("   {}\n", v.iast));
    if !v.marathi.is_empty() {
        s.push_str(&format!("   {}\n", v.marathi));
    }
    s.push_str(&format!(
        "   {}\n   tags: {}\n",
        v.english,
        v.tags.join(", ")
    ));
    s
}

fn render_response(response: &RagResponse, generate: bool) -> String {
    let mut s = String::new();
    if response.results.is_empty() {
        s.push_str("no matching verses\n");
    }
    for verse in &response.results {
        s.push_str(&render_verse(verse));
        s.push('\n');
    }
    match &response.explanation {
        Some(text) => s.push_str(&format!("Explanation:\n{text}\n")),
        None if generate && response.degraded => s.push_str("(explanation unavailable)\n"),
        None => {}
    }
    s.push_str(&format!(
        "[{} retrieval, {:.2} ms]\n",
        response.mode, response.retrieval_ms
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["pragya", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["pragya", "eval"]), EXIT_USAGE);
        assert_eq!(run(["pragya", "query", "x", "--mode", "fuzzy"]), EXIT_USAGE);
    }

    #[test]
    fn missing_corpus_exits_1() {
        assert_eq!(
            run(["pragya", "daily", "--corpus", "/nonexistent/x.csv"]),
            EXIT_DOMAIN
        );
    }
}
