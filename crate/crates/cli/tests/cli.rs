use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ponos_core::testing::{MockChatServer, MockResponse};
use serde_json::Value;
use tempfile::TempDir;

fn repo(rel: &str) -> &'static str {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel);
    Box::leak(path.to_str().unwrap().to_string().into_boxed_str())
}

fn ponos(args: &[&str]) -> Output {
    ponos_env(args, &[])
}

fn ponos_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ponos"));
    cmd.env_clear().args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ingest_fixture(dir: &TempDir) -> PathBuf {
    let store = dir.path().join("store");
    let out = ponos(&["ingest", "--input", repo("fixtures/threads.jsonl"), "--store", s(&store), "--context", "townhall"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    store
}

fn report_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const THREE_LINES: &str = r#"{"id":"p","kind":"post","parent_id":null,"title":"t","body":"b","image_desc":null,"score":1,"created_utc":1,"context":"sub"}
{"id":"c","kind":"comment","parent_id":"p","title":null,"body":"b","image_desc":null,"score":1,"created_utc":2,"context":"sub"}
{"id":"r","kind":"comment","parent_id":"c","title":null,"body":"b","image_desc":null,"score":1,"created_utc":3,"context":"sub"}
"#;

#[test]
fn ingest_three_line_fixture() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.jsonl");
    std::fs::write(&input, THREE_LINES).unwrap();
    let out = ponos(&["ingest", "--input", s(&input), "--store", s(&dir.path().join("st")), "--context", "sub"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("posts=1 comments=2"), "{}", stdout(&out));
    assert!(dir.path().join("st/items.jsonl").exists());
}

#[test]
fn ingest_reports_orphans() {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("store");
    let out = ponos(&["ingest", "--input", repo("fixtures/threads.jsonl"), "--store", s(&store), "--context", "townhall"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "posts=1 comments=16 orphans=1 parse_errors=0");
}

#[test]
fn ingest_missing_file_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = ponos(&["ingest", "--input", "/nonexistent/x.jsonl", "--store", s(dir.path()), "--context", "sub"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error[IoError]"), "{}", stderr(&out));
}

#[test]
fn ingest_corrupt_corpus_is_data_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.jsonl");
    // 2 bad lines of 5 is over the tolerated tenth
    std::fs::write(&input, format!("{THREE_LINES}not json\n{{\"id\":1}}\n")).unwrap();
    let out = ponos(&["ingest", "--input", s(&input), "--store", s(&dir.path().join("st")), "--context", "sub"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error[CorruptCorpus]"), "{}", stderr(&out));
    assert!(!dir.path().join("st").exists());
}

#[test]
fn score_basic_with_gold_labels() {
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let report = dir.path().join("scores.jsonl");
    let out = ponos(&[
        "score", "--store", s(&store), "--variant", "basic",
        "--classifier", repo("configs/gold.toml"), "--gold", repo("fixtures/gold.json"),
        "--out", s(&report), "--parallel", "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let lines = report_lines(&report);
    let ids: Vec<_> = lines.iter().map(|l| l["content_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["c1", "c2", "c3", "p1"]);
    assert_eq!(lines[0]["value"], 0.5);
    assert_eq!(lines[0]["error"], 0.125);
    assert_eq!(lines[0]["n_replies"], 4);
    assert_eq!(lines[0]["classifier_id"], "assessors");
    assert_eq!(lines[1]["value"], 0.2);
    assert_eq!(lines[1]["error"], 0.1);
    assert_eq!(lines[2]["status"], "insufficient replies");
    assert_eq!(lines[2]["n_replies"], 3);
    assert_eq!(lines[3]["status"], "insufficient replies");
    assert!(lines[2].get("value").is_none());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 2, "{leftovers:?}");
}

#[test]
fn score_lambda_only_with_weighted() {
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let report = dir.path().join("scores.jsonl");
    let base = ["score", "--store", s(&store), "--classifier", repo("configs/lexicon.toml"), "--out", s(&report)];
    let out = ponos(&[&base[..], &["--variant", "net", "--lambda", "0.1"]].concat());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(!report.exists());
    let out = ponos(&[&base[..], &["--variant", "toxic"]].concat());
    assert_eq!(out.status.code(), Some(2));
    let out = ponos(&[&base[..], &["--variant", "weighted", "--lambda", "0.001"]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let lines = report_lines(&report);
    assert_eq!(lines[0]["variant"], "weighted");
    assert_eq!(lines[0]["lambda"], 0.001);
}

#[test]
fn weighted_with_zero_lambda_matches_basic() {
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let basic = dir.path().join("b.jsonl");
    let weighted = dir.path().join("w.jsonl");
    let gold = ["--classifier", repo("configs/gold.toml"), "--gold", repo("fixtures/gold.json")];
    ponos(&[&["score", "--store", s(&store), "--out", s(&basic)][..], &gold].concat());
    ponos(&[&["score", "--store", s(&store), "--variant", "weighted", "--lambda", "0", "--out", s(&weighted)][..], &gold].concat());
    let (b, w) = (report_lines(&basic), report_lines(&weighted));
    for i in 0..2 {
        assert_eq!(b[i]["value"], w[i]["value"]);
    }
}

#[test]
fn env_sits_between_flags_and_defaults() {
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let report = dir.path().join("scores.jsonl");
    let args = ["score", "--store", s(&store), "--classifier", repo("configs/lexicon.toml"), "--out", s(&report)];
    let out = ponos_env(&args, &[("PONOS_MIN_REPLIES", "5")]);
    assert_eq!(out.status.code(), Some(0));
    let lines = report_lines(&report);
    assert_eq!(lines[0]["status"], "insufficient replies");
    assert_eq!(lines[1]["n_replies"], 5);
    let out = ponos_env(&[&args[..], &["--min-replies", "3"]].concat(), &[("PONOS_MIN_REPLIES", "5")]);
    assert_eq!(out.status.code(), Some(0));
    let lines = report_lines(&report);
    assert!(lines.iter().all(|l| l.get("status").is_none()));
}

#[test]
fn eval_gold_passthrough_is_perfect() {
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let json = dir.path().join("eval.json");
    let out = ponos(&[
        "eval", "--store", s(&store), "--gold", repo("fixtures/gold.json"),
        "--classifier", repo("configs/gold.toml"), "--out", s(&json),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("f1=1 mae=0 mse=0"), "{}", stdout(&out));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["n_targets"], 3);
    assert_eq!(report["n_replies"], 12);
}

#[test]
fn eval_lexicon_has_errors() {
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let out = ponos(&[
        "eval", "--store", s(&store), "--gold", repo("fixtures/gold.json"),
        "--classifier", repo("configs/lexicon.toml"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("classifier: lexicon-v1"));
}

#[test]
fn knn_build_and_query_duplicate() {
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let scores = dir.path().join("scores.jsonl");
    ponos(&[
        "score", "--store", s(&store), "--classifier", repo("configs/gold.toml"),
        "--gold", repo("fixtures/gold.json"), "--out", s(&scores),
    ]);
    let index = dir.path().join("index");
    let out = ponos(&["knn", "build", "--embeddings", repo("fixtures/embeddings.jsonl"), "--scores", s(&scores), "--index", s(&index)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "indexed=2 skipped=1");

    let q = dir.path().join("q.json");
    std::fs::write(&q, "[0.9, 0.1, 0.0, 0.2]").unwrap();
    let out = ponos(&["knn", "query", "--index", s(&index), "--vector-file", s(&q)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let hit: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(hit["content_id"], "c1");
    assert!((hit["similarity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(hit["value"], 0.5);

    std::fs::write(&q, "[0.0, 0.0, 0.0, 1.0]").unwrap();
    let out = ponos(&["knn", "query", "--index", s(&index), "--vector-file", s(&q), "--tau", "0.95"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("no neighbour"));

    std::fs::write(&q, "[1.0, 0.0]").unwrap();
    let out = ponos(&["knn", "query", "--index", s(&index), "--vector-file", s(&q)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error[DimensionError]"));
}

const GENERATED: &str = "1: This is a terrible idea.\n2: Great, thanks for posting.\n3: Awful plan, honestly.\n4: Fair enough I guess.\n5: Where would people study instead?";

#[test]
fn predict_with_stub_generator() {
    let server = MockChatServer::fixed(GENERATED);
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("pred.jsonl");
    let out = ponos(&[
        "predict", "--input", repo("fixtures/candidates.jsonl"),
        "--generator", repo("configs/generator.toml"), "--generator-endpoint", server.url(),
        "--classifier", repo("configs/lexicon.toml"), "--k", "5", "--out", s(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "cand1 ponos=0.4 n=5 error=0.1");
    let lines = report_lines(&out_path);
    assert_eq!(lines[0]["value"], 0.4);
    assert_eq!(lines[0]["n_replies"], 5);
    assert_eq!(lines[0]["error"], 0.1);
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn predict_with_retrieved_exemplar() {
    let server = MockChatServer::fixed(GENERATED);
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let scores = dir.path().join("scores.jsonl");
    ponos(&[
        "score", "--store", s(&store), "--classifier", repo("configs/gold.toml"),
        "--gold", repo("fixtures/gold.json"), "--out", s(&scores),
    ]);
    let index = dir.path().join("index");
    ponos(&["knn", "build", "--embeddings", repo("fixtures/embeddings.jsonl"), "--scores", s(&scores), "--index", s(&index)]);
    let out = ponos_env(
        &[
            "predict", "--input", repo("fixtures/candidates.jsonl"),
            "--generator", repo("configs/generator.toml"),
            "--classifier", repo("configs/lexicon.toml"), "--out", s(&dir.path().join("p.jsonl")),
            "--index", s(&index), "--store", s(&store), "--query-embeddings", repo("fixtures/candidate_embeddings.jsonl"),
        ],
        &[("PONOS_GENERATOR_ENDPOINT", server.url())],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let reqs = server.requests();
    let prompt = reqs.last().unwrap().messages_of("user").join("\n");
    assert!(prompt.contains("Good riddance, nobody reads anymore."), "{prompt}");
    assert!(prompt.contains("What a terrible take."));
}

#[test]
fn predict_incomplete_generation_is_backend_error() {
    let server = MockChatServer::fixed("1: only one reply");
    let dir = TempDir::new().unwrap();
    let out = ponos(&[
        "predict", "--input", repo("fixtures/candidates.jsonl"),
        "--generator", repo("configs/generator.toml"), "--generator-endpoint", server.url(),
        "--classifier", repo("configs/lexicon.toml"), "--out", s(&dir.path().join("p.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("error[GenerationIncomplete]"));
}

#[test]
fn remote_backend_failure_is_backend_error() {
    let server = MockChatServer::start(|_| MockResponse::status(503));
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let cfg = dir.path().join("remote.toml");
    std::fs::write(
        &cfg,
        "backend = \"remote\"\nclassifier_id = \"r\"\nendpoint_url = \"http://unused\"\nmodel_name = \"m\"\nmax_retries = 1\nbackoff_base_ms = 1\n",
    )
    .unwrap();
    let out = ponos_env(
        &["score", "--store", s(&store), "--classifier", s(&cfg), "--out", s(&dir.path().join("o.jsonl")), "--parallel", "1"],
        &[("PONOS_CLASSIFIER_ENDPOINT", server.url()), ("PONOS_SEED", "7")],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("error[BackendUnavailable]"));
    // two eligible targets, one retry each
    assert_eq!(server.requests().len(), 4);
}

#[test]
fn remote_backend_through_mock_server() {
    let server = MockChatServer::start(|req| {
        let user = req.messages_of("user").join("");
        let replies = user.split("Replies:\n").nth(1).unwrap().split("\n\nAllowed labels").next().unwrap();
        let n = replies.lines().count();
        let body = (1..=n).map(|i| format!("{i}: neutral")).collect::<Vec<_>>().join("\n");
        MockResponse::completion(&body)
    });
    let dir = TempDir::new().unwrap();
    let store = ingest_fixture(&dir);
    let out = ponos_env(
        &["eval", "--store", s(&store), "--gold", repo("fixtures/gold.json"), "--classifier", repo("configs/remote.toml")],
        &[("PONOS_CLASSIFIER_ENDPOINT", server.url()), ("PONOS_API_KEY", "secret")],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    // all-neutral predictions: no true negatives found
    assert!(stdout(&out).contains("f1=0 "), "{}", stdout(&out));
    let reqs = server.requests();
    assert_eq!(reqs.len(), 3);
    assert_eq!(reqs[0].header("authorization"), Some("Bearer secret"));
    assert_eq!(reqs[0].body["model"], "instruct-model");
}

#[test]
fn help_lists_defaults() {
    let score = stdout(&ponos(&["score", "--help"]));
    assert!(score.contains("[default: 4]") && score.contains("[default: 7]"), "{score}");
    assert!(score.contains("--parallel"));
    let query = stdout(&ponos(&["knn", "query", "--help"]));
    assert!(query.contains("[default: 0.8]"), "{query}");
    let predict = stdout(&ponos(&["predict", "--help"]));
    assert!(predict.contains("[default: 5"), "{predict}");
    for cmd in [&["ingest"][..], &["eval"], &["knn", "build"]] {
        let out = ponos(&[cmd, &["--help"]].concat());
        assert_eq!(out.status.code(), Some(0));
    }
}
