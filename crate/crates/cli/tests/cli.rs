use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn pencilc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pencilc"))
        .args(args)
        .current_dir(corpus())
        .output()
        .expect("pencilc runs")
}

fn golden() -> Vec<(i32, Vec<String>)> {
    fs::read_to_string(corpus().join("golden.tsv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (code, args) = l.split_once('\t').unwrap();
            (
                code.parse().unwrap(),
                args.split_whitespace().map(String::from).collect(),
            )
        })
        .collect()
}

fn harness_files() -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(corpus().join("harness"))
        .unwrap()
        .map(|e| format!("harness/{}", e.unwrap().file_name().to_string_lossy()))
        .collect();
    v.sort();
    v
}

fn schema() -> jsonschema::Validator {
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/report-v1.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

#[test]
fn golden_exit_codes() {
    for (expected, args) in golden() {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = pencilc(&args);
        assert_eq!(
            out.status.code(),
            Some(expected),
            "pencilc {}\nstdout:\n{}\nstderr:\n{}",
            args.join(" "),
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn harness_programs_pass_every_stage() {
    for f in harness_files() {
        for cmd in ["check", "summarize", "analyze", "lower"] {
            let out = pencilc(&[cmd, &f, "--param", "n=8"]);
            assert_eq!(
                out.status.code(),
                Some(0),
                "{cmd} {f}: {}",
                String::from_utf8_lossy(&out.stdout)
            );
        }
    }
}

#[test]
fn json_output_validates_against_schema() {
    let validator = schema();
    let mut runs: Vec<Vec<String>> = golden().into_iter().map(|(_, a)| a).collect();
    runs.extend(
        harness_files()
            .into_iter()
            .map(|f| vec!["analyze".into(), f, "--param".into(), "n=8".into()]),
    );
    for mut args in runs {
        args.extend(["--format".to_string(), "json".to_string()]);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = pencilc(&args);
        if out.stdout.is_empty() {
            // clap rejected the command line before any report existed
            assert_eq!(out.status.code(), Some(2));
            continue;
        }
        let v: Value = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{args:?}: {errors:?}");
        assert_eq!(v["schema"], "pencilc-report-v1");
    }
}

#[test]
fn check_bar_prints_r8_and_r3() {
    let out = pencilc(&["check", "listings/bar.pencil.c"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("error R8"), "{text}");
    assert!(text.contains("error R3"), "{text}");
}

#[test]
fn analyze_foo_json_carries_triple() {
    let out = pencilc(&["analyze", "listings/foo.pencil.c", "--param", "n=3", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let foo = v["functions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["name"] == "foo")
        .unwrap();
    let must: Vec<String> = foo["summary"]["must_write"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| format!("{}{}", r["array"].as_str().unwrap(), r["index"]))
        .collect();
    assert_eq!(must, ["A[0]", "A[1]", "A[2]", "C[0]"]);
    assert_eq!(v["binding"]["scalars"]["n"], 3);
}

#[test]
fn op2_reference_prints_cells() {
    let out = pencilc(&["op2", "dsl/mesh.json", "--run-reference"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l == "dcells = [11, 32, 23]"), "{text}");
}

#[test]
fn report_file_is_written_even_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("bar.json");
    let out = pencilc(&["check", "listings/bar.pencil.c", "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(schema().is_valid(&v));
    let codes: Vec<&str> = v["functions"][0]["diagnostics"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["code"].as_str().unwrap())
        .collect();
    assert_eq!(codes, ["R8", "R3"]);
}

#[test]
fn lower_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("sum.c");
    let out = pencilc(&[
        "lower",
        "listings/sum.pencil.c",
        "-o",
        c.to_str().unwrap(),
        "--standalone",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&c).unwrap();
    assert!(text.starts_with("#include"));
    assert!(text.contains("#pragma omp parallel for reduction(+:x)"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let out = pencilc(&["check", "listings/foo.pencil.c", "-o", "/nonexistent-dir/x.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("E-IO"));
}

#[test]
fn budget_env_var_caps_enumeration() {
    let out = Command::new(env!("CARGO_BIN_EXE_pencilc"))
        .args(["analyze", "listings/prefix.pencil.c", "--param", "n=50", "--exact"])
        .env("PENCILC_BUDGET", "10")
        .current_dir(corpus())
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("E-BUDGET"), "{text}");
    assert_eq!(out.status.code(), Some(1));
}
