//! Command-line contract tests: exit codes, config-file semantics, output
//! shapes, and the stdout/stderr split. A small trained fixture is built
//! once and shared read-only across tests.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use gph_core::hash::HammingIndex;

fn gph(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gph"));
    c.current_dir(dir).env("RUST_LOG", "info");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn gph binary")
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "command {cmd:?} failed with {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

/// 80 points, 4 clusters, trained to a 2-bit model and encoded.
fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let d = dir.path();
        run_ok(gph(d).args(["gen-data", "--out", ".", "--n", "80", "--seed", "9"]));
        run_ok(gph(d).args([
            "train",
            "--features",
            "features.csv",
            "--labels",
            "labels.csv",
            "--out-model",
            "model.gphm",
            "--bits",
            "2",
            "--inducing",
            "20",
            "--representatives",
            "80",
            "--sigma-y",
            "1",
            "--seed",
            "9",
        ]));
        run_ok(gph(d).args([
            "encode",
            "--model",
            "model.gphm",
            "--features",
            "features.csv",
            "--out-codes",
            "codes.gphc",
        ]));
        Fixture { dir }
    })
}

// ---------------------------------------------------------------------------
// exit codes and diagnostics

#[test]
fn help_and_version_exit_zero_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    for args in [vec!["--help"], vec!["--version"], vec!["train", "--help"]] {
        let out = run(gph(dir.path()).args(&args));
        assert_eq!(exit_code(&out), 0, "{args:?}");
        assert!(!stdout_of(&out).is_empty(), "{args:?} printed nothing to stdout");
    }
    // Every train flag is documented with its default.
    let help = stdout_of(&run(gph(dir.path()).args(["train", "--help"])));
    for flag in [
        "--features",
        "--labels",
        "--out-model",
        "--bits",
        "--inducing",
        "--representatives",
        "--sigma-y",
        "--sigma-f",
        "--length-scale",
        "--max-sweeps",
        "--damping",
        "--block-size",
        "--seed",
        "--workers",
        "--report",
        "--config",
    ] {
        assert!(help.contains(flag), "train --help is missing {flag}");
    }
    assert!(help.contains("default: 16"), "bits default not documented");
    assert!(help.contains("default: 2/bits"), "sigma-y default not documented");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = fixture();

    // Missing required value, unknown flag, missing subcommand.
    let out = run(gph(d).args(["train", "--labels", "x.csv"]));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("--features"), "should name the missing flag");

    assert_eq!(exit_code(&run(gph(d).args(["train", "--bogus", "1"]))), 1);
    assert_eq!(exit_code(&run(&mut gph(d))), 1);
    assert_eq!(exit_code(&run(gph(d).args(["frobnicate"]))), 1);

    // Domain validation: too few classes, zero inducing points.
    let out = run(gph(d).args(["gen-data", "--out", ".", "--classes", "1"]));
    assert_eq!(exit_code(&out), 1);

    let out = run(gph(d).args([
        "train",
        "--features",
        &f.arg("features.csv"),
        "--labels",
        &f.arg("labels.csv"),
        "--out-model",
        "m.gphm",
        "--inducing",
        "0",
    ]));
    assert_eq!(exit_code(&out), 1);

    // Invalid worker-count environment variable.
    let out = run(gph(d)
        .args([
            "train",
            "--features",
            &f.arg("features.csv"),
            "--labels",
            &f.arg("labels.csv"),
            "--out-model",
            "m.gphm",
        ])
        .env("GPH_WORKERS", "-3"));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("GPH_WORKERS"));
}

#[test]
fn data_errors_exit_two_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = fixture();

    // Nonexistent input.
    let out = run(gph(d).args([
        "train",
        "--features",
        "nosuch.csv",
        "--labels",
        &f.arg("labels.csv"),
        "--out-model",
        "m.gphm",
    ]));
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_of(&out).contains("nosuch.csv"), "stderr: {}", stderr_of(&out));

    // Wrong file kind: a code index is not a model.
    let out = run(gph(d).args([
        "encode",
        "--model",
        &f.arg("codes.gphc"),
        "--features",
        &f.arg("features.csv"),
        "--out-codes",
        "c.gphc",
    ]));
    assert_eq!(exit_code(&out), 2);

    // Malformed CSV names file and line.
    std::fs::write(d.join("ragged.csv"), "0,1.0,2.0\n1,3.0\n").unwrap();
    let out = run(gph(d).args([
        "train",
        "--features",
        "ragged.csv",
        "--labels",
        &f.arg("labels.csv"),
        "--out-model",
        "m.gphm",
    ]));
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_of(&out).contains("ragged.csv:2"), "stderr: {}", stderr_of(&out));
}

#[test]
fn diagnostics_stay_off_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = fixture();
    let out = run_ok(gph(d).args([
        "train",
        "--features",
        &f.arg("features.csv"),
        "--labels",
        &f.arg("labels.csv"),
        "--out-model",
        "m.gphm",
        "--bits",
        "2",
        "--inducing",
        "20",
        "--representatives",
        "80",
        "--seed",
        "9",
    ]));
    let stdout = stdout_of(&out);
    for line in stdout.lines() {
        assert!(
            line.contains(" = "),
            "train stdout must be `key = value` lines only, got: {line}"
        );
    }
    let stderr = stderr_of(&out);
    assert!(stderr.contains("INFO"), "progress log missing from stderr");
    assert!(stderr.contains("sigma_y not set"), "σ_y default echo missing from stderr");
}

// ---------------------------------------------------------------------------
// config files

#[test]
fn config_file_yields_to_flags_and_beats_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("gen.conf"), "# fixture\nout = .\nn = 50\nseed = 9\n").unwrap();

    run_ok(gph(d).args(["gen-data", "--config", "gen.conf"]));
    let lines = std::fs::read_to_string(d.join("features.csv")).unwrap().lines().count();
    assert_eq!(lines, 50, "config value for n");

    run_ok(gph(d).args(["gen-data", "--config", "gen.conf", "--n", "30"]));
    let lines = std::fs::read_to_string(d.join("features.csv")).unwrap().lines().count();
    assert_eq!(lines, 30, "flag must beat the config file");
}

#[test]
fn config_file_rejects_unknown_keys_and_bad_syntax() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    std::fs::write(d.join("bad.conf"), "out = .\nmystery = 1\n").unwrap();
    let out = run(gph(d).args(["gen-data", "--config", "bad.conf"]));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("mystery"), "stderr: {}", stderr_of(&out));

    std::fs::write(d.join("syntax.conf"), "no equals sign\n").unwrap();
    let out = run(gph(d).args(["gen-data", "--config", "syntax.conf"]));
    assert_eq!(exit_code(&out), 1);

    std::fs::write(d.join("dup.conf"), "n = 1\nn = 2\n").unwrap();
    let out = run(gph(d).args(["gen-data", "--config", "dup.conf"]));
    assert_eq!(exit_code(&out), 1);

    let out = run(gph(d).args(["gen-data", "--out", ".", "--config", "absent.conf"]));
    assert_eq!(exit_code(&out), 1);
}

// ---------------------------------------------------------------------------
// command behavior

#[test]
fn gen_data_is_deterministic_per_seed() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [d1.path(), d2.path()] {
        run_ok(gph(d).args(["gen-data", "--out", ".", "--n", "40", "--seed", "17"]));
    }
    for name in ["features.csv", "labels.csv"] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across identical invocations");
    }
}

#[test]
fn encode_reports_dimension_mismatch_with_both_dims() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = fixture();
    run_ok(gph(d).args(["gen-data", "--out", ".", "--dim", "3", "--n", "20"]));
    let out = run(gph(d).args([
        "encode",
        "--model",
        &f.arg("model.gphm"),
        "--features",
        "features.csv",
        "--out-codes",
        "c.gphc",
    ]));
    assert_eq!(exit_code(&out), 1);
    let msg = stderr_of(&out);
    assert!(
        msg.contains('3') && msg.contains('2'),
        "mismatch message must name both dimensions, got: {msg}"
    );
}

#[test]
fn encode_of_empty_features_writes_empty_index() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = fixture();
    std::fs::write(d.join("empty.csv"), "").unwrap();
    let out = run_ok(gph(d).args([
        "encode",
        "--model",
        &f.arg("model.gphm"),
        "--features",
        "empty.csv",
        "--out-codes",
        "empty.gphc",
    ]));
    assert!(stdout_of(&out).contains("items = 0"));
    let index = HammingIndex::load(&d.join("empty.gphc")).expect("empty index loads");
    assert_eq!(index.len(), 0);
    assert_eq!(index.bits(), 2);

    // Searching with an empty query set emits just the header.
    let out = run_ok(gph(d).args([
        "search",
        "--codes",
        &f.arg("codes.gphc"),
        "--query-codes",
        "empty.gphc",
    ]));
    assert_eq!(stdout_of(&out), "query_id,rank,item_id,distance\n");
}

#[test]
fn search_outputs_ranked_csv_and_radius_lists() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = fixture();

    let out = run_ok(gph(d).args([
        "search",
        "--codes",
        &f.arg("codes.gphc"),
        "--query-codes",
        &f.arg("codes.gphc"),
        "--k",
        "3",
    ]));
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("query_id,rank,item_id,distance"));
    // Each indexed item queries the index it came from: rank 1 is itself
    // (or an equal-code item with a smaller id) at distance 0.
    let first = lines.next().expect("at least one hit row");
    let cells: Vec<&str> = first.split(',').collect();
    assert_eq!(cells.len(), 4);
    assert_eq!(cells[1], "1");
    assert_eq!(cells[3], "0");
    assert_eq!(text.lines().count(), 1 + 3 * 80, "3 hits per query over 80 queries");

    // k larger than the index yields the full ranking.
    let out = run_ok(gph(d).args([
        "search",
        "--codes",
        &f.arg("codes.gphc"),
        "--query-codes",
        &f.arg("codes.gphc"),
        "--k",
        "500",
    ]));
    assert_eq!(stdout_of(&out).lines().count(), 1 + 80 * 80);

    // Radius mode switches to a two-column listing.
    let out = run_ok(gph(d).args([
        "search",
        "--codes",
        &f.arg("codes.gphc"),
        "--query-codes",
        &f.arg("codes.gphc"),
        "--radius",
        "0",
    ]));
    let text = stdout_of(&out);
    assert_eq!(text.lines().next(), Some("query_id,item_id"));
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').count(), 2, "radius rows are query_id,item_id: {line}");
    }

    // Query sources are mutually exclusive, and features need a model.
    let out = run(gph(d).args([
        "search",
        "--codes",
        &f.arg("codes.gphc"),
        "--query-codes",
        &f.arg("codes.gphc"),
        "--query-features",
        &f.arg("features.csv"),
        "--model",
        &f.arg("model.gphm"),
    ]));
    assert_eq!(exit_code(&out), 1);
    let out = run(gph(d).args(["search", "--codes", &f.arg("codes.gphc")]));
    assert_eq!(exit_code(&out), 1);
    let out = run(gph(d).args([
        "search",
        "--codes",
        &f.arg("codes.gphc"),
        "--query-features",
        &f.arg("features.csv"),
    ]));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("--model"));
}

#[test]
fn search_by_features_matches_search_by_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = fixture();
    let by_codes = run_ok(gph(d).args([
        "search",
        "--codes",
        &f.arg("codes.gphc"),
        "--query-codes",
        &f.arg("codes.gphc"),
        "--k",
        "5",
    ]));
    let by_features = run_ok(gph(d).args([
        "search",
        "--codes",
        &f.arg("codes.gphc"),
        "--query-features",
        &f.arg("features.csv"),
        "--model",
        &f.arg("model.gphm"),
        "--k",
        "5",
    ]));
    assert_eq!(
        stdout_of(&by_codes),
        stdout_of(&by_features),
        "hashing the training features must reproduce their stored codes"
    );
}

#[test]
fn eval_emits_kv_block_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = fixture();

    // Curve on stdout when --out is absent.
    let out = run_ok(gph(d).args([
        "eval",
        "--codes",
        &f.arg("codes.gphc"),
        "--labels",
        &f.arg("labels.csv"),
        "--radius",
        "0",
    ]));
    let text = stdout_of(&out);
    for key in ["map = ", "precision_at_radius = ", "radius = 0", "queries = 80", "scored_queries = "] {
        assert!(text.contains(key), "missing `{key}` in:\n{text}");
    }
    let curve_rows = text.lines().skip_while(|l| *l != "recall,precision").count();
    assert_eq!(curve_rows, 1 + 11, "header plus 11 recall levels");

    // Curve into a file when --out is given; stdout then has no curve.
    let out = run_ok(gph(d).args([
        "eval",
        "--codes",
        &f.arg("codes.gphc"),
        "--labels",
        &f.arg("labels.csv"),
        "--radius",
        "0",
        "--out",
        "curve.csv",
    ]));
    let text = stdout_of(&out);
    assert!(!text.contains("recall,precision"), "curve must move to the file");
    let curve = std::fs::read_to_string(d.join("curve.csv")).unwrap();
    assert!(curve.starts_with("recall,precision\n"));
    assert_eq!(curve.lines().count(), 1 + 11);
}
