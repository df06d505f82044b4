use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn pragya(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pragya"))
        .args(args)
        .env_remove("PRAGYA_EMBED_URL")
        .env_remove("PRAGYA_EMBED_MODEL")
        .env_remove("PRAGYA_GEN_URL")
        .env_remove("PRAGYA_GEN_MODEL")
        .env_remove("PRAGYA_CORPUS")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

#[test]
fn query_prints_three_ranked_verses() {
    let out = pragya(&[
        "query",
        "importance of truth",
        "-k",
        "3",
        "--embedder",
        "hash",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("1. [") && text.contains("2. [") && text.contains("3. ["));
    assert!(!text.contains("4. ["));
    assert!(text.contains("(explanation unavailable)"));
}

#[test]
fn query_json_and_keyword_mode() {
    let out = pragya(&[
        "query",
        "--mode",
        "keyword",
        "friendship",
        "--k",
        "2",
        "--format",
        "json",
        "--no-generate",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let body: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(body["mode"], "keyword");
    assert_eq!(body["results"].as_array().unwrap().len(), 2);
    assert_eq!(body["degraded"], false);
}

#[test]
fn eval_formats() {
    let corpus = data("subhashitas.csv");
    let queries = data("judged_queries.csv");
    let base = [
        "eval",
        "--corpus",
        corpus.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--k",
        "3",
        "--embedder",
        "hash",
        "--repetitions",
        "1",
    ];
    let table = pragya(&[&base[..], &["--format", "table"]].concat());
    assert_eq!(
        table.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&table.stderr)
    );
    let text = stdout(&table);
    for label in [
        "Top-3 Precision",
        "Coverage",
        "Latency per Query",
        "Keyword Search",
        "Semantic Retrieval",
    ] {
        assert!(text.contains(label), "missing {label}:\n{text}");
    }

    let json = pragya(&[&base[..], &["--format", "json"]].concat());
    let report: Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(report["arms"].as_array().unwrap().len(), 2);

    let csv = pragya(&[&base[..], &["--format", "csv"]].concat());
    let parsed = pragya::eval::parse_report_csv(&stdout(&csv)).unwrap();
    assert_eq!(parsed.arms.len(), 2);
    assert_eq!(parsed.arms[0].n_queries, 24);
}

#[test]
fn exit_codes() {
    assert_eq!(pragya(&["eval"]).status.code(), Some(2));
    assert_eq!(pragya(&["query"]).status.code(), Some(2));
    assert_eq!(pragya(&["query", "x", "-k", "0"]).status.code(), Some(2));
    assert_eq!(
        pragya(&["query", "x", "--embedder", "remote"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pragya(&["query", "x", "--corpus", "/no/such.csv"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(pragya(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "sanskrit,marathi,english\nधर्मः,x,y\n").unwrap();
    let out = pragya(&["daily", "--corpus", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("header"));
}

#[test]
fn remote_embedder_unreachable_is_domain_error() {
    let out = pragya(&[
        "query",
        "truth",
        "--embedder",
        "remote",
        "--embed-url",
        "http://127.0.0.1:1",
        "--embed-model",
        "m",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn index_then_query_with_index() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("verses.prgx");
    let idx = index.to_str().unwrap();
    let out = pragya(&["index", "--out", idx, "--embedder", "hash"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("indexed 52 verses"));

    let out = pragya(&["query", "truth", "--index", idx, "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));

    std::fs::write(&index, b"garbage").unwrap();
    let out = pragya(&["query", "truth", "--index", idx]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn transliterate_and_daily() {
    let out = pragya(&["transliterate", "धर्मः"]);
    assert_eq!(stdout(&out).trim(), "dharmaḥ");

    let out = pragya(&["daily", "--date", "2025-01-01", "--format", "json"]);
    let verse: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(verse["verse_id"], 26);

    assert_eq!(
        pragya(&["daily", "--date", "01/01/2025"]).status.code(),
        Some(2)
    );
}

#[test]
fn config_file_layer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pragya.toml");
    std::fs::write(&cfg, "corpus = \"/no/such.csv\"\n").unwrap();
    let out = pragya(&["--config", cfg.to_str().unwrap(), "daily"]);
    assert_eq!(out.status.code(), Some(1));
    let corpus = data("subhashitas.csv");
    let out = pragya(&[
        "--config",
        cfg.to_str().unwrap(),
        "daily",
        "--corpus",
        corpus.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));

    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    assert_eq!(
        pragya(&["--config", cfg.to_str().unwrap(), "daily"])
            .status
            .code(),
        Some(2)
    );
}
