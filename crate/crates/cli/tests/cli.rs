use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use genlab_core::agreement::AgreementReport;
use genlab_core::ontology::NestedCvReport;

fn mini(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mini").join(name)
}

fn genlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genlab"))
        .args(args)
        .env_remove("GENLAB_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_input_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = genlab(&[
        "ridit",
        "--responses",
        p(&missing),
        "--out",
        p(&dir.path().join("r.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.jsonl"), "{}", stderr(&out));
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"annotator_id\": \"a\"}\n").unwrap();
    let out = genlab(&["ridit", "--responses", p(&bad), "--out", p(&dir.path().join("r.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.jsonl"));
}

#[test]
fn usage_errors_exit_one() {
    let out = genlab(&["ridit", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let out = genlab(&[
        "normalize",
        "--responses",
        p(&mini("responses/dev.jsonl")),
        "--out",
        "x.tsv",
    ]);
    assert_eq!(out.status.code(), Some(1), "missing --split");
    let out = genlab(&[
        "features", "--conllu", "c", "--items", "i", "--kind", "argument", "--config", "+*", "--out", "o",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert_eq!(genlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_property_name_is_a_usage_error() {
    let out = genlab(&[
        "iaa",
        "--responses",
        p(&mini("responses/test.jsonl")),
        "--property",
        "Is.Green",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_filters_by_kind() {
    let dir = tempfile::tempdir().unwrap();
    let read = |kind: &str| -> Vec<serde_json::Value> {
        let out = dir.path().join(format!("{kind}.jsonl"));
        let run = genlab(&[
            "ingest",
            "--conllu",
            p(&mini("corpus.conllu")),
            "--spans",
            p(&mini("spans.jsonl")),
            "--kind",
            kind,
            "--out",
            p(&out),
        ]);
        assert!(run.status.success(), "{}", stderr(&run));
        std::fs::read_to_string(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    };
    let both = read("both");
    let args = read("argument");
    let preds = read("predicate");
    assert_eq!(both.len(), args.len() + preds.len());
    assert!(args.iter().all(|v| v["kind"] == "argument"));
    assert!(preds.iter().all(|v| v["kind"] == "predicate"));
}

#[test]
fn normalize_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let fit = dir.path().join(format!("{name}.fit.json"));
        let r = genlab(&[
            "normalize",
            "--responses",
            p(&mini("responses/dev.jsonl")),
            "--split",
            "dev",
            "--out",
            p(&out),
            "--fit-out",
            p(&fit),
        ]);
        assert!(r.status.success(), "{}", stderr(&r));
        (std::fs::read(out).unwrap(), std::fs::read(fit).unwrap())
    };
    let a = run("a.tsv");
    let b = run("b.tsv");
    assert_eq!(a, b);
    let text = String::from_utf8(a.0).unwrap();
    assert!(text.starts_with("item_id\t"));
}

#[test]
fn normalize_long_format_is_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scores.jsonl");
    let r = genlab(&[
        "normalize",
        "--responses",
        p(&mini("responses/dev.jsonl")),
        "--split",
        "dev",
        "--format",
        "long",
        "--out",
        p(&out),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let text = std::fs::read_to_string(out).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["item_id"].is_string() && v["property"].is_string() && v["score"].is_number());
    }
}

#[test]
fn iaa_single_property_report_and_seed_reproducibility() {
    let responses = mini("responses/test.jsonl");
    let args = [
        "iaa",
        "--responses",
        p(&responses),
        "--property",
        "Is.Kind",
        "--reps",
        "500",
        "--seed",
        "11",
    ];
    let a = genlab(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let report: AgreementReport = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report.bootstrap_reps, 500);
    assert_eq!(report.seed, 11);
    assert!(report.p_e >= 0.5 && report.p_e < 1.0);
    assert_eq!(a.stdout, genlab(&args).stdout);

    let table = genlab(&[
        "iaa",
        "--responses",
        p(&mini("responses/test.jsonl")),
        "--reps",
        "200",
        "--format",
        "table",
    ]);
    assert!(table.status.success());
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.lines().next().unwrap().starts_with("Property"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn seed_can_come_from_the_environment() {
    let run = |env_seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_genlab"))
            .args([
                "iaa",
                "--responses",
                p(&mini("responses/test.jsonl")),
                "--property",
                "Is.Kind",
                "--reps",
                "300",
            ])
            .env("GENLAB_SEED", env_seed)
            .output()
            .unwrap()
    };
    let report: AgreementReport = serde_json::from_slice(&run("9").stdout).unwrap();
    assert_eq!(report.seed, 9);
}

#[test]
fn compare_runs_nested_cv_on_the_mini_ontology() {
    let out = genlab(&[
        "compare",
        "--input",
        p(&mini("ontology.tsv")),
        "--seed",
        "2",
        "--outer-k",
        "5",
        "--inner-k",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: NestedCvReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.per_class.len(), 4);
    assert_eq!(report.predictions.len(), 80);
    assert_eq!(report.chosen_configs.len(), 5);
    assert!((0.0..=1.0).contains(&report.macro_f1));
}

#[test]
fn export_plotdata_requires_both_axes() {
    let out = genlab(&["export-plotdata", "--scores", "s.tsv", "--x", "Is.Kind"]);
    assert_eq!(out.status.code(), Some(1));
}
