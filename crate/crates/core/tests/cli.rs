mod common;

use common::{fixture_dir, lexnorm, stdout, FakeChatServer};
use lexnorm::manifest::RunManifest;

#[test]
fn validate_prints_counts() {
    let dir = fixture_dir();
    let o = lexnorm(&["validate", "train.tsv"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o), "sentences: 3\ntokens: 9\n");
}

#[test]
fn validate_reports_malformed_line() {
    let dir = fixture_dir();
    std::fs::write(dir.path().join("bad.tsv"), "u\tyou\nno tab here\n\n").unwrap();
    let o = lexnorm(&["validate", "bad.tsv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = fixture_dir();
    let o = lexnorm(&["score", "--frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn score_fixture_e() {
    let dir = fixture_dir();
    std::fs::write(dir.path().join("p.txt"), "you\nim\nok\n\n").unwrap();
    let o = lexnorm(
        &["score", "--gold", "test.tsv", "--pred", "p.txt"],
        dir.path(),
    );
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("err: 50.0000\n"), "{out}");
    assert!(out.contains("accuracy: 0.666667\n"));

    let o = lexnorm(
        &["score", "--gold", "test.tsv", "--pred", "p.txt", "--tsv"],
        dir.path(),
    );
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(
        lines[1],
        "und\t0.666667\t50.0000\t1.000000\t0.500000\t0.666667\t1\t0\t1"
    );
}

#[test]
fn misaligned_predictions_fail() {
    let dir = fixture_dir();
    std::fs::write(dir.path().join("p.txt"), "you\nim\n\n").unwrap();
    let o = lexnorm(
        &["score", "--gold", "test.tsv", "--pred", "p.txt"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn echo_run_is_deterministic_with_manifest() {
    let dir = fixture_dir();
    let args = |out: &'static str| {
        [
            "run",
            "--test",
            "test.tsv",
            "--train",
            "train.tsv",
            "--backend",
            "echo",
            "--detection",
            "gold",
            "--seed",
            "42",
            "--shots",
            "2",
            "--out",
            out,
        ]
    };
    assert!(lexnorm(&args("a.txt"), dir.path()).status.success());
    assert!(lexnorm(&args("b.txt"), dir.path()).status.success());
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("a.txt"), read("b.txt"));
    assert_eq!(read("a.txt.calls.jsonl"), read("b.txt.calls.jsonl"));
    // echo answers with the raw word; u is unresolved at min_support 2
    assert_eq!(read("a.txt"), b"u\nim\nok\n\n");

    let ma = RunManifest::load(&dir.path().join("a.txt.manifest.json")).unwrap();
    let mb = RunManifest::load(&dir.path().join("b.txt.manifest.json")).unwrap();
    assert_eq!(ma.config_digest, mb.config_digest);
    assert_eq!(ma.corpus_digests, mb.corpus_digests);
    assert_eq!(ma.seed, Some(42));
    assert!(ma
        .instruction
        .as_deref()
        .unwrap()
        .starts_with("You are normalizing"));
    assert_eq!(ma.corpus_digests.len(), 2);
}

#[test]
fn artifact_subcommands_write_one_manifest() {
    let dir = fixture_dir();
    let p = dir.path();
    let steps: [&[&str]; 5] = [
        &["train-mfr", "--train", "train.tsv", "--out", "table.tsv"],
        &[
            "apply-mfr",
            "--table",
            "table.tsv",
            "--test",
            "test.tsv",
            "--out",
            "mfr.txt",
        ],
        &[
            "build-lookup",
            "--table",
            "table.tsv",
            "--min-support",
            "1",
            "--out",
            "lookup.tsv",
        ],
        &[
            "detect",
            "--test",
            "test.tsv",
            "--source",
            "table",
            "--table",
            "table.tsv",
            "--out",
            "labels.txt",
        ],
        &[
            "translit",
            "--input",
            "test.tsv",
            "--table",
            "combining-marks",
            "--out",
            "latin.tsv",
        ],
    ];
    for step in steps {
        let o = lexnorm(step, p);
        assert!(
            o.status.success(),
            "{step:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let out = step[step.len() - 1];
        assert!(p.join(format!("{out}.manifest.json")).is_file(), "{out}");
    }
    // im -> {i'm: 1, im: 1} ties and keeps the identity candidate
    assert_eq!(
        std::fs::read_to_string(p.join("mfr.txt")).unwrap(),
        "you\nim\nok\n\n"
    );
    assert_eq!(
        std::fs::read_to_string(p.join("labels.txt")).unwrap(),
        "1\n0\n0\n\n"
    );
    assert_eq!(
        std::fs::read_to_string(p.join("lookup.tsv"))
            .unwrap()
            .lines()
            .next()
            .unwrap(),
        "gonna\tgoing to\t0\t1"
    );
    let manifests = std::fs::read_dir(p)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".manifest.json")
        })
        .count();
    assert_eq!(manifests, steps.len());

    let o = lexnorm(
        &[
            "detect-eval",
            "--gold",
            "test.tsv",
            "--labels",
            "labels.txt",
        ],
        p,
    );
    assert!(stdout(&o).contains("f1: 0.666667"));
    let o = lexnorm(&["score", "--gold", "test.tsv", "--pred", "mfr.txt"], p);
    assert!(stdout(&o).contains("err: 50.0000"));
}

#[test]
fn translit_round_trip_through_cli() {
    let dir = fixture_dir();
    let p = dir.path();
    std::fs::write(p.join("th.tsv"), "กา\tกา\nข\tขา\n\n").unwrap();
    let run = |args: &[&str]| assert!(lexnorm(args, p).status.success());
    run(&[
        "translit",
        "--input",
        "th.tsv",
        "--table",
        "thai-demo",
        "--out",
        "latin.tsv",
    ]);
    run(&[
        "translit",
        "--input",
        "latin.tsv",
        "--table",
        "thai-demo",
        "--reverse",
        "--out",
        "back.tsv",
    ]);
    let latin = std::fs::read_to_string(p.join("latin.tsv")).unwrap();
    assert!(latin.is_ascii());
    assert_eq!(
        std::fs::read(p.join("back.tsv")).unwrap(),
        std::fs::read(p.join("th.tsv")).unwrap()
    );

    std::fs::write(p.join("bad.tsv"), "ж\tж\n\n").unwrap();
    let o = lexnorm(
        &[
            "translit",
            "--input",
            "bad.tsv",
            "--table",
            "thai-demo",
            "--out",
            "x.tsv",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("U+0436"));
}

#[test]
fn errors_stats_and_seg_stats() {
    let dir = fixture_dir();
    let p = dir.path();
    std::fs::write(p.join("p.txt"), "yu\ni'm\nokk\n\n").unwrap();
    let out = stdout(&lexnorm(
        &["errors", "--gold", "test.tsv", "--pred", "p.txt"],
        p,
    ));
    assert!(out.contains("wrong_candidate\t1\t"), "{out}");
    assert!(out.contains("overnormalized\t1\t"));
    assert!(out.contains("correct\t1\t"));

    let out = stdout(&lexnorm(&["stats", "train.tsv", "--lang", "en"], p));
    assert_eq!(out.lines().nth(1).unwrap(), "en\t9\tyes\tyes\t44.44");

    let out = stdout(&lexnorm(&["seg-stats", "train.tsv"], p));
    assert!(out.lines().nth(1).unwrap().starts_with("bytes\t1.00\t"));
}

#[test]
fn cost_from_totals_and_call_log() {
    let dir = fixture_dir();
    let p = dir.path();
    let out = stdout(&lexnorm(
        &[
            "cost",
            "--input-tokens",
            "3693437",
            "--counterfactual-tokens",
            "77833519",
        ],
        p,
    ));
    assert!(out.contains("cost_usd: 9.2336"), "{out}");
    assert!(out.contains("reduction_percent: 95.25"), "{out}");

    let o = lexnorm(
        &[
            "run",
            "--test",
            "test.tsv",
            "--train",
            "train.tsv",
            "--shots",
            "1",
            "--out",
            "r.txt",
        ],
        p,
    );
    assert!(o.status.success());
    let out = stdout(&lexnorm(&["cost", "--records", "r.txt.calls.jsonl"], p));
    assert!(out.contains("calls: 2"), "{out}");
    assert!(out.contains("approximate"));
}

#[test]
fn sheet_export_and_summary() {
    let dir = fixture_dir();
    let p = dir.path();
    std::fs::write(p.join("p.txt"), "yu\ni'm\nokk\n\n").unwrap();
    std::fs::write(p.join("l.txt"), "1\n1\n0\n\n").unwrap();
    let o = lexnorm(
        &[
            "sheet", "export", "--gold", "test.tsv", "--pred", "p.txt", "--labels", "l.txt",
            "--size", "2", "--out", "s.tsv",
        ],
        p,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sheet = std::fs::read_to_string(p.join("s.tsv")).unwrap();
    assert_eq!(sheet.lines().count(), 3);
    assert!(sheet.contains("<<u>> im ok\tu\tyu\tyou\t"));
    let filled = sheet.replacen("\tyou\t\n", "\tyou\tspelling\n", 1);
    std::fs::write(p.join("s.tsv"), filled).unwrap();
    let out = stdout(&lexnorm(&["sheet", "summary", "s.tsv"], p));
    assert!(out.contains("spelling\t1\t1.0000"), "{out}");

    let o = lexnorm(
        &[
            "sheet", "export", "--gold", "test.tsv", "--pred", "p.txt", "--labels", "l.txt",
            "--size", "3", "--out", "s.tsv",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn http_backend_with_warm_cache_sends_nothing() {
    let server = FakeChatServer::start();
    let dir = fixture_dir();
    let p = dir.path();
    let run = |backend: &str, out: &str| {
        let o = lexnorm(
            &[
                "run",
                "--test",
                "test.tsv",
                "--train",
                "train.tsv",
                "--shots",
                "2",
                "--backend",
                backend,
                "--endpoint",
                &server.url,
                "--model",
                "fake",
                "--cache",
                "cache.jsonl",
                "--out",
                out,
            ],
            p,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("http", "cold.txt");
    assert_eq!(server.count(), 2);
    assert_eq!(
        std::fs::read_to_string(p.join("cold.txt")).unwrap(),
        "you\ni'm\nok\n\n"
    );

    run("http", "warm.txt");
    run("replay", "replay.txt");
    assert_eq!(server.count(), 2);
    let read = |name: &str| std::fs::read(p.join(name)).unwrap();
    assert_eq!(read("cold.txt"), read("warm.txt"));
    assert_eq!(read("cold.txt"), read("replay.txt"));

    let o = lexnorm(&["score", "--gold", "test.tsv", "--pred", "cold.txt"], p);
    assert!(stdout(&o).contains("err: 100.0000"));
}

#[test]
fn replay_miss_writes_partial_output() {
    let dir = fixture_dir();
    let p = dir.path();
    std::fs::write(p.join("empty.jsonl"), "").unwrap();
    let o = lexnorm(
        &[
            "run",
            "--test",
            "test.tsv",
            "--train",
            "train.tsv",
            "--shots",
            "2",
            "--backend",
            "replay",
            "--cache",
            "empty.jsonl",
            "--out",
            "r.txt",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replay cache has no entry"));
    assert_eq!(
        std::fs::read_to_string(p.join("r.txt.partial")).unwrap(),
        "u\nim\nok\n\n"
    );
    assert!(!p.join("r.txt").exists());
}

#[test]
fn http_backend_requires_endpoint() {
    let dir = fixture_dir();
    let o = lexnorm(
        &[
            "run",
            "--test",
            "test.tsv",
            "--train",
            "train.tsv",
            "--backend",
            "http",
            "--out",
            "r.txt",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("LEXNORM_API_BASE"));
}
