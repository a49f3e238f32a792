use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn skurank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skurank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = skurank(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MICRO_LOG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/micro_log.jsonl");

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    for p in [&a, &b] {
        ok(&["simulate", "--seed", "7", "--users", "300", "--out", s(p)]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.catalog.tsv")).unwrap(),
        fs::read(dir.path().join("b.catalog.tsv")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("a.truth.tsv")).unwrap(),
        fs::read(dir.path().join("b.truth.tsv")).unwrap()
    );
    let c = dir.path().join("c.jsonl");
    ok(&["simulate", "--seed", "8", "--users", "300", "--out", s(&c)]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn extract_on_micro_log_matches_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("triples.tsv");
    let stdout = ok(&["extract", "--in", MICRO_LOG, "--rho", "3", "--out", s(&out)]);
    let lines = fs::read_to_string(&out).unwrap();
    // u1: one click against three negatives; u2: one click against two
    assert_eq!(lines.lines().count(), 5);
    assert!(stdout.contains("examples\t5"));
    assert!(dir.path().join("triples.train.tsv").exists());
    assert!(dir.path().join("triples.test.tsv").exists());

    ok(&["extract", "--in", MICRO_LOG, "--rho", "1", "--out", s(&out)]);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn usage_errors_exit_2_and_stage_failures_exit_1() {
    let out = skurank(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = skurank(&["extract", "--in", MICRO_LOG]);
    assert_eq!(out.status.code(), Some(2));
    let out = skurank(&[]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = skurank(&[
        "extract",
        "--in",
        s(&missing),
        "--out",
        s(&dir.path().join("t.tsv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: ") && err.contains("nope.jsonl"));

    let out = skurank(&[
        "--set",
        "extract.sigma=1",
        "extract",
        "--in",
        MICRO_LOG,
        "--out",
        s(&dir.path().join("t.tsv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("unknown config key"));
}

const SMALL: &str = "\
catalog.skus = 300
embed.dim = 8
embed.epochs = 1
model.n_q = 4
train.max_epochs = 2
bench.users = 500
bench.frozen = false
";

/// The benchmark equals running the stages one by one on its artifacts.
#[test]
fn staged_run_reproduces_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("small.conf");
    fs::write(&cfg, SMALL).unwrap();
    let bench = d.join("bench");
    let report = ok(&[
        "--config",
        s(&cfg),
        "benchmark",
        "--seed",
        "3",
        "--out",
        s(&bench),
    ]);
    assert_eq!(
        report,
        fs::read_to_string(bench.join("report.txt")).unwrap()
    );

    let log = d.join("log.jsonl");
    ok(&[
        "--config",
        s(&cfg),
        "--seed",
        "3",
        "simulate",
        "--users",
        "500",
        "--out",
        s(&log),
    ]);
    assert_eq!(
        fs::read(&log).unwrap(),
        fs::read(bench.join("log.jsonl")).unwrap()
    );
    let catalog = d.join("log.catalog.tsv");
    let triples = d.join("triples.tsv");
    ok(&[
        "--config",
        s(&cfg),
        "extract",
        "--in",
        s(&log),
        "--out",
        s(&triples),
    ]);
    for f in [
        "triples.tsv",
        "triples.train.tsv",
        "triples.validation.tsv",
        "triples.test.tsv",
    ] {
        assert_eq!(
            fs::read(d.join(f)).unwrap(),
            fs::read(bench.join(f)).unwrap(),
            "{f}"
        );
    }
    let vectors = d.join("vectors.txt");
    ok(&[
        "--config",
        s(&cfg),
        "--seed",
        "3",
        "pretrain",
        "--in",
        s(&catalog),
        "--out",
        s(&vectors),
    ]);
    assert_eq!(
        fs::read(&vectors).unwrap(),
        fs::read(bench.join("vectors.txt")).unwrap()
    );
    let model = d.join("model.ckpt");
    let log_lines = ok(&[
        "--config",
        s(&cfg),
        "--seed",
        "3",
        "train",
        "--in",
        s(&triples),
        "--catalog",
        s(&catalog),
        "--vectors",
        s(&vectors),
        "--out",
        s(&model),
    ]);
    assert!(log_lines.starts_with("epoch=0 "));
    assert_eq!(
        fs::read(&model).unwrap(),
        fs::read(bench.join("kernel_pooling_trainable_N_D_64.ckpt")).unwrap()
    );

    let eval = ok(&[
        "eval",
        "--in",
        s(&triples),
        "--catalog",
        s(&catalog),
        "--model",
        s(&model),
    ]);
    fn table_row(text: &str) -> Option<Vec<String>> {
        let line = text.lines().rfind(|l| l.starts_with("kernel_pooling"))?;
        Some(
            line.split_whitespace()
                .rev()
                .take(2)
                .map(String::from)
                .collect(),
        )
    }
    assert_eq!(table_row(&eval), table_row(&report), "{eval}\n{report}");

    let moved = ok(&[
        "inspect-embeddings",
        "--in",
        s(&vectors),
        "--model",
        s(&model),
    ]);
    assert!(moved.starts_with("From\tTo\tCount\tWord Pairs\n"));
    assert!(moved.lines().last().unwrap().starts_with("pairs="));
}
