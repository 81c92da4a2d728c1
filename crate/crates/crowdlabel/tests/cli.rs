use std::path::Path;
use std::process::{Command, Output};

use crowdlabel::io::{write_atomic, write_json, write_jsonl};
use crowdlabel::manifest::LOCK_FILE;
use crowdlabel::sim::{generate, SimConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crowdlabel"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup(dir: &Path, records: usize) {
    let corpus = generate(&SimConfig { records, seed: 11, ..Default::default() });
    write_jsonl(&dir.join("raw_posts.jsonl"), &corpus.posts).unwrap();
    write_jsonl(&dir.join("raw_comments.jsonl"), &corpus.comments).unwrap();
    write_jsonl(&dir.join("raw_gold.jsonl"), &corpus.gold).unwrap();
    let mut config = String::from("max_in_flight = 4\n");
    for (id, fx) in &corpus.fixtures {
        write_json(&dir.join(format!("{id}.json")), fx).unwrap();
        config.push_str(&format!("\n[[annotator]]\nid = \"{id}\"\nbackend = \"scripted\"\nfixture = \"{id}.json\"\n"));
    }
    write_atomic(&dir.join("config.toml"), config.as_bytes()).unwrap();
}

const OUTPUTS: &[&str] = &[
    "posts.jsonl",
    "comments.jsonl",
    "clean.jsonl",
    "gold.jsonl",
    "votes.jsonl",
    "consensus.jsonl",
    "review.jsonl",
    "records.jsonl",
    "audit.jsonl",
    "review_export.jsonl",
    "final.jsonl",
];

fn pipeline(dir: &Path, seed: &str) {
    let c = ["--config", "config.toml", "--seed", seed, "--run-dir", "run"];
    let with = |rest: &[&str]| -> Vec<String> { c.iter().chain(rest).map(|s| s.to_string()).collect() };
    let steps: Vec<Vec<&str>> = vec![
        vec!["ingest", "--kind", "posts", "--in", "raw_posts.jsonl", "--out", "posts.jsonl"],
        vec![
            "ingest", "--kind", "comments", "--in", "raw_comments.jsonl", "--out", "comments.jsonl", "--posts",
            "posts.jsonl", "--clean-out", "clean.jsonl",
        ],
        vec!["ingest", "--kind", "gold", "--in", "raw_gold.jsonl", "--out", "gold.jsonl"],
        vec![
            "annotate", "--task", "extract_pair", "--in", "clean.jsonl", "--out", "votes.jsonl", "--comments",
            "comments.jsonl", "--posts", "posts.jsonl", "--cache", "cache.jsonl",
        ],
        vec!["consense", "--in", "votes.jsonl", "--out", "consensus.jsonl", "--review-out", "review.jsonl"],
        vec!["rules", "--in", "consensus.jsonl", "--review-items", "review.jsonl", "--out", "records.jsonl", "--audit-out", "audit.jsonl"],
        vec!["review-export", "--in", "review.jsonl", "--out", "review_export.jsonl", "--comments", "comments.jsonl", "--posts", "posts.jsonl"],
        vec!["merge", "--in", "records.jsonl", "--review-items", "review_export.jsonl", "--out", "final.jsonl"],
    ];
    for s in steps {
        let args = with(&s);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run(dir, &refs);
    }
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    setup(a.path(), 120);
    setup(b.path(), 120);
    pipeline(a.path(), "5");
    pipeline(b.path(), "5");
    for f in OUTPUTS {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
        assert!(!x.is_empty() || *f == "audit.jsonl", "{f} is empty");
    }
}

#[test]
fn rerun_is_up_to_date_and_makes_no_calls() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path(), 30);
    pipeline(d.path(), "1");
    let out = run(
        d.path(),
        &["--config", "config.toml", "--seed", "1", "--run-dir", "run", "consense", "--in", "votes.jsonl", "--out", "consensus.jsonl", "--review-out", "review.jsonl"],
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("up to date"));
    assert!(d.path().join("run/crowdlabel-manifest.json").exists());

    // forced annotate hits the response cache only
    let out = run(
        d.path(),
        &[
            "--config", "config.toml", "--run-dir", "run", "--force", "annotate", "--task", "extract_pair", "--in",
            "clean.jsonl", "--out", "votes2.jsonl", "--cache", "cache.jsonl", "--comments", "comments.jsonl",
            "--posts", "posts.jsonl",
        ],
    );
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["backend_calls"], 0);
    assert_eq!(stats["cache_hits"], 150);
    assert_eq!(std::fs::read(d.path().join("votes.jsonl")).unwrap(), std::fs::read(d.path().join("votes2.jsonl")).unwrap());
}

#[test]
fn a_locked_run_directory_is_refused() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path(), 5);
    std::fs::create_dir_all(d.path().join("run")).unwrap();
    std::fs::write(d.path().join("run").join(LOCK_FILE), "1").unwrap();
    let out = bin()
        .current_dir(d.path())
        .args(["--run-dir", "run", "ingest", "--kind", "posts", "--in", "raw_posts.jsonl", "--out", "posts.jsonl"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn missing_upstream_file_is_named() {
    let d = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(d.path())
        .args(["consense", "--in", "votes.jsonl", "--out", "c.jsonl", "--review-out", "r.jsonl"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("votes.jsonl"));
}

#[test]
fn malformed_rows_report_their_line() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("raw.jsonl"),
        "{\"post_id\":\"p\",\"url\":\"u\",\"like_count\":1,\"posted_at\":0}\n{\"post_id\":\"q\",\"url\":\"u\",\"like_count\":\"lots\",\"posted_at\":0}\n",
    )
    .unwrap();
    let out = bin()
        .current_dir(d.path())
        .args(["ingest", "--kind", "posts", "--in", "raw.jsonl", "--out", "posts.jsonl"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("raw.jsonl:2"), "{err}");
}

#[test]
fn stats_and_report_commands() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["stats", "combinations", "--pattern-counts", "40020,12453,7757,2231", "--out", "h.json"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("chi2 = 54208.67"));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("h.json")).unwrap()).unwrap();
    assert_eq!(v["h1"]["df"], 3);

    std::fs::write(
        d.path().join("rounds.json"),
        r#"[{"label":"Round 1","accuracy_pct":67.84,"hours":2.0,"human_effort":"prompt design"},
            {"label":"Round 6","accuracy_pct":99.66,"hours":30.5,"human_effort":"review of flagged items"}]"#,
    )
    .unwrap();
    let out = run(d.path(), &["report", "--rounds", "rounds.json", "--records", "70614", "--out", "t.txt"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("Manual"));
    assert!(table.contains("784.6"));
    assert!(std::fs::read_to_string(d.path().join("t.txt")).unwrap().contains("Round 6"));
}

#[test]
fn evaluate_scores_against_gold() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path(), 40);
    pipeline(d.path(), "2");
    let out = run(d.path(), &["evaluate", "--in", "records.jsonl", "--gold", "gold.jsonl", "--out", "eval.json"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("n = 40"));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("eval.json")).unwrap()).unwrap();
    assert!(v["overall_accuracy"].as_f64().unwrap() > 0.9);
}
