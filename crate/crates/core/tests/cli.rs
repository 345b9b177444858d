use std::path::Path;
use std::process::{Command, Output};

fn bws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bws")).args(args).output().expect("spawn bws")
}

fn ok(args: &[&str]) -> Output {
    let out = bws(args);
    assert!(
        out.status.success(),
        "bws {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

fn write_terms(dir: &Path, n: usize) -> std::path::PathBuf {
    let path = dir.join("terms.txt");
    let words: Vec<String> = (0..n).map(|i| format!("word {i}")).collect();
    std::fs::write(&path, words.join("\n") + "\n").unwrap();
    path
}

#[test]
fn generate_is_reproducible_and_verifiable() {
    let dir = tempfile::tempdir().unwrap();
    let terms = write_terms(dir.path(), 40);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    ok(&["generate", "--terms", p(&terms), "--seed", "11", "--out", p(&a)]);
    ok(&["generate", "--terms", p(&terms), "--seed", "11", "--out", p(&b)]);
    ok(&["generate", "--terms", p(&terms), "--seed", "12", "--out", p(&c)]);
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(String::from_utf8(read(&a)).unwrap().lines().count(), 81);
    ok(&["verify", "--tuples", p(&a), "--terms", p(&terms)]);
}

#[test]
fn verify_rejects_design_missing_a_term() {
    let dir = tempfile::tempdir().unwrap();
    let terms = write_terms(dir.path(), 12);
    let tuples = dir.path().join("t.csv");
    ok(&["generate", "--terms", p(&terms), "--out", p(&tuples)]);
    let more = write_terms(dir.path(), 13);
    let out = bws(&["verify", "--tuples", p(&tuples), "--terms", p(&more)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(bws(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bws(&["generate", "--terms", "/no/such/file.txt", "--out", "/tmp/unused.csv"]).status.code(), Some(2));
    assert_eq!(bws(&["stats", "binom", "--successes", "5", "--trials", "4"]).status.code(), Some(1));
    let out = ok(&["stats", "binom", "--successes", "90", "--trials", "100", "--method", "clopper-pearson"]);
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 0.7753298801677749).abs() < 1e-9);
}

fn run_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let sim = dir.join("sim");
    ok(&["simulate", "--n", "40", "--annotators", "6", "--sigma", "0.3", "--seed", "3", "--out-dir", p(&sim)]);
    let tuples = sim.join("tuples.csv");
    let responses = sim.join("responses.csv");
    let before = (read(&tuples), read(&responses));

    let lex = dir.join("lex.tsv");
    ok(&["score", "--tuples", p(&tuples), "--responses", p(&responses), "--out", p(&lex)]);
    let split = dir.join("split.csv");
    ok(&["reliability", "split-half", "--tuples", p(&tuples), "--responses", p(&responses), "--seed", "1", "--out", p(&split)]);
    let sub = dir.join("sub.csv");
    ok(&[
        "reliability", "subsample", "--tuples", p(&tuples), "--responses", p(&responses), "--k-max", "6", "--reps", "4",
        "--out", p(&sub),
    ]);
    let curve = dir.join("curve.csv");
    ok(&[
        "agreement", "curve", "--tuples", p(&tuples), "--responses", p(&responses), "--lexicon", p(&lex), "--halfwidth",
        "0.05", "--step", "0.05", "--out", p(&curve),
    ]);
    let lpd = bws(&["agreement", "lpd", "--curve", p(&curve), "--min-annotations", "10"]);
    assert!(matches!(lpd.status.code(), Some(0) | Some(1)));
    let plot = dir.join("plot.csv");
    ok(&["plotdata", "--lexicon", p(&lex), "--out", p(&plot)]);

    assert_eq!(before, (read(&tuples), read(&responses)), "inputs were modified");
    let mut files = Vec::new();
    for name in ["sim/latent.tsv", "sim/tuples.csv", "sim/responses.csv", "lex.tsv", "split.csv", "sub.csv", "curve.csv", "plot.csv"] {
        files.push((name.to_string(), read(&dir.join(name))));
    }
    files.push(("lpd".into(), lpd.stdout));
    files
}

#[test]
fn pipeline_outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(a.path());
    let second = run_pipeline(b.path());
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        assert!(!x.is_empty() || name == "lpd", "{name} is empty");
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn score_json_uses_term_texts_and_spearman_of_self_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let terms = write_terms(dir.path(), 12);
    let tuples = dir.path().join("t.csv");
    ok(&["generate", "--terms", p(&terms), "--seed", "4", "--out", p(&tuples)]);
    let text = String::from_utf8(read(&tuples)).unwrap();
    let mut csv = String::from("tuple_id,annotator_id,best,worst,timestamp\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        csv.push_str(&format!("{},x,{},{},\n", f[0], f[1], f[4]));
    }
    let responses = dir.path().join("r.csv");
    std::fs::write(&responses, csv).unwrap();

    let out = ok(&[
        "score", "--tuples", p(&tuples), "--responses", p(&responses), "--terms", p(&terms), "--format", "json",
    ]);
    let entries: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let entries = entries.as_array().unwrap();
    assert_eq!(entries.len(), 12);
    assert!(entries.iter().all(|e| e["text"].as_str().unwrap().starts_with("word ")));

    let lex = dir.path().join("lex.tsv");
    ok(&["score", "--tuples", p(&tuples), "--responses", p(&responses), "--out", p(&lex)]);
    let out = ok(&["stats", "spearman", "--a", p(&lex), "--b", p(&lex)]);
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 1.0).abs() < 1e-12);
}
