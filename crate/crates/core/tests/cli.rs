use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manifold-rank"))
        .args(args)
        .env("MANIFOLD_RANK_THREADS", "1")
        .output()
        .unwrap()
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Two crescents with `count` points each, indexed with k=10.
    fn crescents(count: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Self { dir };
        let out = bin(&["synth", "crescents", "--out", &s(&f.data()), "--count", &count.to_string(), "--seed", "3"]);
        assert!(out.status.success(), "{}", stderr(&out));
        let out = bin(&["index", "--descriptors", &s(&f.data().join("database.mrds")), "--out", &s(&f.index()), "--k", "10"]);
        assert!(out.status.success(), "{}", stderr(&out));
        f
    }

    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    fn index(&self) -> PathBuf {
        self.dir.path().join("index")
    }

    fn query(&self, extra: &[&str]) -> Output {
        let mut args = vec![
            "query".to_owned(),
            "--index".to_owned(),
            s(&self.index()),
            "--queries".to_owned(),
            s(&self.data().join("queries.mrds")),
            "--k-query".to_owned(),
            "10".to_owned(),
        ];
        args.extend(extra.iter().map(|a| a.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        bin(&refs)
    }
}

#[test]
fn help_succeeds_and_unknown_flags_are_usage_errors() {
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    assert_eq!(bin(&["index", "--no-such-flag"]).status.code(), Some(1));
}

#[test]
fn zero_k_is_a_usage_error() {
    let f = Fixture::crescents(30);
    let out = bin(&["index", "--descriptors", &s(&f.data().join("database.mrds")), "--out", &s(&f.index()), "--k", "0"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn round_trip_separates_crescents() {
    let f = Fixture::crescents(150);
    let rankings = f.dir.path().join("r.jsonl");
    let out = f.query(&["--out", &s(&rankings), "--no-timing"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&rankings).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["query_id"], 0);
    assert_eq!(first["order"].as_array().unwrap().len(), 300);
    assert_eq!(first["elapsed_ms"], 0.0);
    assert_eq!(first["converged"], true);

    let out = bin(&["eval", "--rankings", &s(&rankings), "--ground-truth", &s(&f.data().join("ground_truth.json"))]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let map: f64 = stdout.trim().strip_prefix("mAP ").unwrap().parse().unwrap();
    assert!(map > 0.9, "{stdout}");
}

#[test]
fn perfect_rankings_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let rankings = dir.path().join("r.jsonl");
    let gt = dir.path().join("gt.json");
    std::fs::write(&rankings, "{\"query_id\":0,\"order\":[2,1,0,3]}\n{\"query_id\":1,\"order\":[3,0,1,2]}\n").unwrap();
    std::fs::write(&gt, r#"{"queries":[{"id":0,"positives":[1,2]},{"id":1,"positives":[3],"ignored":[0]}]}"#).unwrap();
    let out = bin(&["eval", "--rankings", &s(&rankings), "--ground-truth", &s(&gt)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "mAP 1.000000");
}

#[test]
fn solver_choices_agree() {
    let f = Fixture::crescents(40);
    let orders: Vec<String> = ["cg", "jacobi", "dense"]
        .iter()
        .map(|solver| {
            let out = f.query(&["--solver", solver, "--tol", "1e-10", "--max-iters", "100000", "--no-timing"]);
            assert!(out.status.success(), "{solver}: {}", stderr(&out));
            String::from_utf8(out.stdout)
                .unwrap()
                .lines()
                .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["order"].to_string())
                .collect::<Vec<_>>()
                .join("\n")
        })
        .collect();
    assert_eq!(orders[0], orders[1]);
    assert_eq!(orders[0], orders[2]);
}

#[test]
fn dense_solver_refuses_large_systems() {
    let f = Fixture::crescents(1001);
    let out = f.query(&["--solver", "dense"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("2000"), "{}", stderr(&out));
}

#[test]
fn strict_mode_reports_non_convergence() {
    let f = Fixture::crescents(40);
    let out = f.query(&["--max-iters", "1", "--strict"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let out = f.query(&["--max-iters", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn tampered_index_is_refused() {
    let f = Fixture::crescents(40);
    let graph = f.index().join("graph.mrgr");
    let mut bytes = std::fs::read(&graph).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&graph, bytes).unwrap();
    let out = f.query(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("graph.mrgr"), "{}", stderr(&out));
}

#[test]
fn eval_names_queries_without_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let rankings = dir.path().join("r.jsonl");
    let gt = dir.path().join("gt.json");
    std::fs::write(&rankings, "{\"query_id\":0,\"order\":[1,0]}\n{\"query_id\":7,\"order\":[0,1]}\n").unwrap();
    std::fs::write(&gt, r#"{"queries":[{"id":0,"positives":[1]}]}"#).unwrap();
    let out = bin(&["eval", "--rankings", &s(&rankings), "--ground-truth", &s(&gt)]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains('7'), "{}", stderr(&out));
}

#[test]
fn eval_writes_per_query_csv() {
    let dir = tempfile::tempdir().unwrap();
    let rankings = dir.path().join("r.jsonl");
    let gt = dir.path().join("gt.json");
    let csv = dir.path().join("ap.csv");
    std::fs::write(&rankings, "{\"query_id\":0,\"order\":[1,0,2]}\n{\"query_id\":1,\"order\":[0,1,2]}\n").unwrap();
    std::fs::write(&gt, r#"{"queries":[{"id":0,"positives":[1,2]},{"id":1,"positives":[0]}]}"#).unwrap();
    let out = bin(&["eval", "--rankings", &s(&rankings), "--ground-truth", &s(&gt), "--per-query", &s(&csv)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "mAP 0.916667");
    let table = std::fs::read_to_string(csv).unwrap();
    assert_eq!(table.lines().next(), Some("query_id,ap"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn synth_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = bin(&["synth", "planted", "--out", &s(&out_dir), "--classes", "3", "--items-per-class", "4",
            "--distractors", "5", "--seed", seed]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(out_dir.join("database.mrds")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("a", "5"), run("c", "6"));
}
