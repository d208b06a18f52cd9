//! End-to-end tests of the `steerkit` binary: golden-file comparisons for
//! every artifact format, flag/config precedence, and exit codes per error
//! class.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_steerkit");

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn golden() -> PathBuf {
    fixtures().join("golden")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn assert_same_bytes(actual: &Path, expected: &Path) {
    let a = std::fs::read(actual).expect("actual output exists");
    let e = std::fs::read(expected).expect("expected file exists");
    assert_eq!(
        a,
        e,
        "{} differs from {}",
        actual.display(),
        expected.display()
    );
}

fn path_str(p: &Path) -> String {
    p.to_str().expect("utf-8 path").to_string()
}

#[test]
fn help_lists_every_subcommand() {
    let out = run_ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    for cmd in [
        "segment",
        "score-stability",
        "build",
        "fit-subspace",
        "probe",
        "simulate",
        "metrics",
    ] {
        assert!(text.contains(cmd), "help is missing `{cmd}`:\n{text}");
    }
}

#[test]
fn version_flag_reports_package_version() {
    let out = run_ok(&["--version"]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains(env!("CARGO_PKG_VERSION")), "{text}");
}

#[test]
fn segment_output_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("segments.jsonl");
    run_ok(&[
        "segment",
        "--traces",
        &path_str(&golden().join("traces.jsonl")),
        "--out",
        &path_str(&out),
    ]);
    assert_same_bytes(&out, &golden().join("segments.jsonl"));
}

#[test]
fn segment_handles_unclosed_and_missing_think_tags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("segments.jsonl");
    run_ok(&[
        "segment",
        "--traces",
        &path_str(&fixtures().join("traces.jsonl")),
        "--out",
        &path_str(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let records: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 5);

    let by_id = |id: &str| {
        records
            .iter()
            .find(|r| r["question_id"] == id)
            .unwrap_or_else(|| panic!("no record for {id}"))
    };
    let labels = |r: &serde_json::Value| -> Vec<String> {
        r["paragraphs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["label"].as_str().unwrap().to_string())
            .collect()
    };

    assert_eq!(labels(by_id("q1")), ["execution", "reflection"]);

    let q2 = by_id("q2");
    assert_eq!(q2["unclosed_think"], true);
    assert_eq!(labels(q2), ["execution", "reflection"]);

    // No tags at all: the whole text is the reasoning block.
    let q4 = by_id("q4");
    assert_eq!(q4["think_start"], 0);
    assert_eq!(
        q4["think_end"].as_u64().unwrap() as usize,
        q4["raw_text"].as_str().unwrap().len()
    );
    assert_eq!(labels(q4), ["execution", "transition", "execution"]);
}

#[test]
fn stability_report_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stability.json");
    run_ok(&[
        "score-stability",
        "--segments",
        &path_str(&golden().join("segments.jsonl")),
        "--continuations",
        &path_str(&golden().join("continuations.jsonl")),
        "--out",
        &path_str(&out),
    ]);
    assert_same_bytes(&out, &golden().join("stability.json"));
    // The volatile sidecar rides along; the report itself stays clean.
    assert!(out.with_extension("json.meta").exists());
}

#[test]
fn seal_vector_matches_golden_file_and_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.svec");
    run_ok(&[
        "build",
        "--segments",
        &path_str(&golden().join("segments.jsonl")),
        "--states",
        &path_str(&golden().join("states")),
        "--method",
        "seal",
        "--out",
        &path_str(&out),
    ]);
    assert_same_bytes(&out, &golden().join("v_seal.svec"));

    // Contrasts: a = (2,2,0) - (0.5,0,1); b = (1,1,3) - (0,1,1);
    // averaged and normalized.
    let v = steerkit_core::io::read_vector_file(&out).unwrap();
    let want = [
        0.745_355_992_499_929_9,
        0.596_284_793_999_943_8,
        0.298_142_396_999_971_97,
    ];
    let cos = steerkit_core::vecmath::cosine(&v.direction, &want).unwrap();
    assert!(cos > 1.0 - 1e-9, "direction drifted: cos = {cos}");
    assert_eq!(v.layer, 20);
    assert_eq!(v.n_problems, 2);
    assert_eq!(v.n_boundaries, 3);
}

#[test]
fn stable_vector_matches_golden_file_and_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.svec");
    let stdout = run_ok(&[
        "build",
        "--segments",
        &path_str(&golden().join("segments.jsonl")),
        "--states",
        &path_str(&golden().join("states")),
        "--method",
        "stable",
        "--report",
        &path_str(&golden().join("stability.json")),
        "--tau",
        "0.8",
        "--out",
        &path_str(&out),
    ])
    .stdout;
    assert_same_bytes(&out, &golden().join("v_stable.svec"));

    // Only a#p1 (0.8) and b#p0 (1.0) survive the 0.8 threshold.
    let v = steerkit_core::io::read_vector_file(&out).unwrap();
    let want = [0.218_217_890_235_992, 0.872_871_560_943_969_6, 0.436_435_780_471_984_8];
    let cos = steerkit_core::vecmath::cosine(&v.direction, &want).unwrap();
    assert!(cos > 1.0 - 1e-9, "direction drifted: cos = {cos}");
    assert_eq!(v.n_boundaries, 2);

    let summary: serde_json::Value =
        serde_json::from_slice(&stdout).expect("stdout carries a JSON summary");
    assert_eq!(summary["method"], "stable");
    assert_eq!(summary["n_boundaries"], 2);
}

#[test]
fn config_file_supplies_tau_and_flag_overrides_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "tau = 0.0\n").unwrap();
    let base = [
        "build",
        "--segments",
        &path_str(&golden().join("segments.jsonl")),
        "--states",
        &path_str(&golden().join("states")),
        "--method",
        "stable",
        "--report",
        &path_str(&golden().join("stability.json")),
    ];

    // tau = 0.0 from the file keeps all three scored boundaries.
    let out_a = dir.path().join("a.svec");
    let mut args: Vec<&str> = base.to_vec();
    let cfg_s = path_str(&cfg);
    let out_a_s = path_str(&out_a);
    args.extend_from_slice(&["--config", &cfg_s, "--out", &out_a_s]);
    let stdout = run_ok(&args).stdout;
    let summary: serde_json::Value = serde_json::from_slice(&stdout).unwrap();
    assert_eq!(summary["n_boundaries"], 3);

    // The flag wins over the file.
    let out_b = dir.path().join("b.svec");
    let out_b_s = path_str(&out_b);
    let mut args: Vec<&str> = base.to_vec();
    args.extend_from_slice(&["--config", &cfg_s, "--tau", "0.8", "--out", &out_b_s]);
    let stdout = run_ok(&args).stdout;
    let summary: serde_json::Value = serde_json::from_slice(&stdout).unwrap();
    assert_eq!(summary["n_boundaries"], 2);
}

#[test]
fn metrics_output_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics.csv");
    run_ok(&[
        "metrics",
        "--traces",
        &path_str(&golden().join("traces.jsonl")),
        "--out",
        &path_str(&out),
    ]);
    assert_same_bytes(&out, &golden().join("metrics.csv"));
}

#[test]
fn metrics_extracts_nested_and_last_boxed_answers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics.csv");
    run_ok(&[
        "metrics",
        "--traces",
        &path_str(&fixtures().join("traces.jsonl")),
        "--answers",
        &path_str(&fixtures().join("answers.jsonl")),
        "--out",
        &path_str(&out),
    ]);
    let mut rows = BTreeMapRows::read(&out);
    // Override file replaces the embedded gold answer.
    assert_eq!(rows.get("q1", "gold_answer"), "41");
    assert_eq!(rows.get("q1", "exact_match"), "false");
    // No boxed answer and no gold: both empty, match undefined.
    assert_eq!(rows.get("q2", "boxed_answer"), "");
    assert_eq!(rows.get("q2", "exact_match"), "");
    // Braces nest; the whole group is kept.
    assert_eq!(rows.get("q3", "boxed_answer"), "\\frac{1}{2}");
    assert_eq!(rows.get("q3", "exact_match"), "true");
    // Override supplies a gold answer the trace lacked.
    assert_eq!(rows.get("q4", "exact_match"), "true");
    // The last boxed group wins.
    assert_eq!(rows.get("q5", "boxed_answer"), "12");
    assert_eq!(rows.get("q5", "exact_match"), "false");
    rows.done();
}

/// Tiny CSV table keyed by the question_id column.
struct BTreeMapRows {
    header: Vec<String>,
    rows: std::collections::BTreeMap<String, Vec<String>>,
}

impl BTreeMapRows {
    fn read(path: &Path) -> Self {
        let mut rdr = csv::Reader::from_path(path).unwrap();
        let header: Vec<String> = rdr
            .headers()
            .unwrap()
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = std::collections::BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let fields: Vec<String> = rec.iter().map(str::to_string).collect();
            rows.insert(fields[0].clone(), fields);
        }
        BTreeMapRows { header, rows }
    }

    fn get(&mut self, id: &str, column: &str) -> String {
        let idx = self.header.iter().position(|h| h == column).unwrap();
        self.rows[id][idx].clone()
    }

    fn done(self) {}
}

#[test]
fn metrics_on_empty_corpus_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = dir.path().join("metrics.csv");
    run_ok(&[
        "metrics",
        "--traces",
        &path_str(&empty),
        "--out",
        &path_str(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        text,
        "question_id,word_count,reflection_count,boxed_answer,gold_answer,exact_match\n"
    );
}

#[test]
fn combined_without_report_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "build",
        "--segments",
        &path_str(&golden().join("segments.jsonl")),
        "--states",
        &path_str(&golden().join("states")),
        "--method",
        "combined",
        "--out",
        &path_str(&dir.path().join("v.svec")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("--report"), "{err}");
}

#[test]
fn lexicon_mismatch_against_report_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        format!(
            "lexicon = {:?}\n",
            fixtures().join("lexicon.toml").to_str().unwrap()
        ),
    )
    .unwrap();
    let out = run(&[
        "build",
        "--config",
        &path_str(&cfg),
        "--segments",
        &path_str(&golden().join("segments.jsonl")),
        "--states",
        &path_str(&golden().join("states")),
        "--method",
        "stable",
        "--report",
        &path_str(&golden().join("stability.json")),
        "--out",
        &path_str(&dir.path().join("v.svec")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("scored with lexicon"), "{err}");
}

#[test]
fn malformed_jsonl_is_an_ingest_error_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"question_id\":\"x\",\"text\":\"t\"}\nnot json\n").unwrap();
    let out = run(&[
        "segment",
        "--traces",
        &path_str(&bad),
        "--out",
        &path_str(&dir.path().join("o.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains(":2"), "line number missing: {err}");
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "segment",
        "--traces",
        &path_str(&dir.path().join("nope.jsonl")),
        "--out",
        &path_str(&dir.path().join("o.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn unfillable_probe_bins_are_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "probe",
        "--mode",
        "behavior",
        "--segments",
        &path_str(&golden().join("segments.jsonl")),
        "--states",
        &path_str(&golden().join("states")),
        "--report",
        &path_str(&golden().join("stability.json")),
        "--per-bin",
        "5",
        "--out",
        &path_str(&dir.path().join("p.json")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "no_such_setting = 1\n").unwrap();
    let out = run(&[
        "segment",
        "--config",
        &path_str(&cfg),
        "--traces",
        &path_str(&golden().join("traces.jsonl")),
        "--out",
        &path_str(&dir.path().join("o.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn control_build_writes_size_matched_vectors_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("controls");
    run_ok(&[
        "build",
        "--segments",
        &path_str(&golden().join("segments.jsonl")),
        "--states",
        &path_str(&golden().join("states")),
        "--method",
        "control",
        "--report",
        &path_str(&golden().join("stability.json")),
        "--tau",
        "0.8",
        "--n-controls",
        "3",
        "--seed",
        "11",
        "--out",
        &path_str(&out_dir),
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    let entries = manifest["report"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for (i, entry) in entries.iter().enumerate() {
        // Size-matched to the two boundaries that survive tau = 0.8.
        assert_eq!(entry["n_boundaries"], 2);
        let file = out_dir.join(entry["file"].as_str().unwrap());
        let v = steerkit_core::io::read_vector_file(&file).unwrap();
        assert_eq!(v.n_boundaries, 2);
        assert_eq!(v.seed, Some(11), "control {i} lost its seed");
    }
}

#[test]
fn simulate_writes_dataset_and_enveloped_reports() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.toml");
    std::fs::write(
        &sim,
        "dim = 8\nn_problems = 6\nboundaries_per_problem = 3\nexecutions_per_problem = 2\nseed = 5\n",
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    run_ok(&[
        "simulate",
        "--sim-config",
        &path_str(&sim),
        "--experiment",
        "soft-coeff",
        "--out-dir",
        &path_str(&out_dir),
    ]);
    assert!(out_dir.join("traces.jsonl").exists());
    assert!(out_dir.join("continuations.jsonl").exists());
    assert!(out_dir.join("truth.json").exists());
    assert!(out_dir.join("states").join("syn00000.hsv").exists());
    assert!(out_dir.join("question_states").join("syn00005.hsv").exists());

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("soft_coeff.json")).unwrap())
            .unwrap();
    for key in ["config_hash", "lexicon_hash", "report"] {
        assert!(report.get(key).is_some(), "envelope is missing {key}");
    }
    assert!(report["report"]["mc_se"].as_f64().unwrap() > 0.0);
}

#[test]
fn segmented_dataset_round_trips_through_the_pipeline() {
    // simulate -> segment -> score -> build on one tiny dataset, ensuring
    // the generated artifacts feed back through the real commands.
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.toml");
    std::fs::write(
        &sim,
        "dim = 8\nn_problems = 6\nboundaries_per_problem = 3\nexecutions_per_problem = 2\nseed = 6\n",
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    run_ok(&[
        "simulate",
        "--sim-config",
        &path_str(&sim),
        "--out-dir",
        &path_str(&out_dir),
    ]);
    let segments = dir.path().join("segments.jsonl");
    run_ok(&[
        "segment",
        "--traces",
        &path_str(&out_dir.join("traces.jsonl")),
        "--out",
        &path_str(&segments),
    ]);
    let report = dir.path().join("stability.json");
    run_ok(&[
        "score-stability",
        "--segments",
        &path_str(&segments),
        "--continuations",
        &path_str(&out_dir.join("continuations.jsonl")),
        "--out",
        &path_str(&report),
    ]);
    let vector = dir.path().join("v.svec");
    let stdout = run_ok(&[
        "build",
        "--segments",
        &path_str(&segments),
        "--states",
        &path_str(&out_dir.join("states")),
        "--method",
        "soft",
        "--report",
        &path_str(&report),
        "--out",
        &path_str(&vector),
    ])
    .stdout;
    let summary: serde_json::Value = serde_json::from_slice(&stdout).unwrap();
    assert_eq!(summary["method"], "soft");
    let v = steerkit_core::io::read_vector_file(&vector).unwrap();
    assert_eq!(v.direction.len(), 8);
}

#[test]
fn repeated_runs_produce_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        run_ok(&[
            "score-stability",
            "--segments",
            &path_str(&golden().join("segments.jsonl")),
            "--continuations",
            &path_str(&golden().join("continuations.jsonl")),
            "--out",
            &path_str(out),
        ]);
    }
    assert_same_bytes(&a, &b);
}
