use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_benchmeta"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn synth(dir: &Path) {
    let out = run(
        dir,
        &[
            "synth",
            "--instances",
            "120",
            "--out",
            "o.jsonl",
            "--config-out",
            "c.toml",
            "--seed",
            "9",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const DATA: [&str; 4] = ["--outcomes", "o.jsonl", "--config", "c.toml"];

fn with_data<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(DATA);
    v
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["--version"])), 0);
    assert_eq!(code(&run(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&run(dir.path(), &["metrics", "--format", "yaml"])), 1);
    // command needing outcomes without any
    assert_eq!(code(&run(dir.path(), &["cad"])), 1);
    assert_eq!(
        code(&run(dir.path(), &["metrics", "--reference", "--weights", "1,x,2"])),
        1
    );
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("bad.jsonl"),
        "{\"model\":\"a\",\"benchmark\":\"b\",\"instance\":\"1\",\"correct\":2}\n",
    )
    .unwrap();
    let out = run(p, &["validate", "--outcomes", "bad.jsonl"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    assert_eq!(code(&run(p, &["validate", "--outcomes", "missing.jsonl"])), 2);
    std::fs::write(p.join("bad.toml"), "[families]\nf = [\"a\"]\n").unwrap();
    synth(p);
    assert_eq!(
        code(&run(p, &["validate", "--outcomes", "o.jsonl", "--config", "bad.toml"])),
        2
    );
}

#[test]
fn degenerate_metric_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut lines = String::new();
    for m in ["a", "b", "c"] {
        for q in 0..5 {
            lines.push_str(&format!(
                "{{\"model\":\"{m}\",\"benchmark\":\"flat\",\"instance\":\"{q}\",\"correct\":1}}\n"
            ));
        }
    }
    std::fs::write(p.join("flat.jsonl"), lines).unwrap();
    std::fs::write(p.join("flat.toml"), "[families]\nf = [\"a\", \"b\", \"c\"]\n").unwrap();
    let out = run(p, &["stability", "--outcomes", "flat.jsonl", "--config", "flat.toml"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn end_to_end_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth(p);

    let out = run(p, &with_data(&["report", "--out-dir", "rep"]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("bench-01") && text.contains("BQS"));
    for f in [
        "report.json",
        "report.txt",
        "metrics.csv",
        "metrics.txt",
        "family_cad.csv",
    ] {
        assert!(p.join("rep").join(f).exists(), "{f} missing");
    }
    let json = std::fs::read_to_string(p.join("rep/report.json")).unwrap();
    let parsed = benchmeta::report::QualityReport::from_json(&json).unwrap();
    assert_eq!(parsed.rows.len(), 15);

    let out = run(
        p,
        &with_data(&[
            "select",
            "--iterations",
            "10",
            "--benchmark",
            "bench-02",
            "--out-dir",
            "sel",
        ]),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(p.join("sel/selection.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    let entry: serde_json::Value = serde_json::from_str(manifest.trim()).unwrap();
    assert_eq!(entry["retained"].as_array().unwrap().len(), 42);
    assert_eq!(entry["spec"]["strategy"], "cad_ds");

    let out = run(p, &with_data(&["cad", "--format", "csv"]));
    assert_eq!(code(&out), 0);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("# cad\nbenchmark,raw,cad,alpha,beta,gamma,delta\n"));

    let out = run(p, &with_data(&["heldout", "--format", "json"]));
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn reference_tables_without_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["metrics", "--reference", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let csv = String::from_utf8(out.stdout).unwrap();
    let math500 = csv.lines().find(|l| l.starts_with("MATH-500")).unwrap();
    assert!(math500.contains(",0.1557,"), "{math500}");

    let out = run(dir.path(), &["lambda-analysis", "--raw", "0.01,0.05,0.1,0.2"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().contains("0.549"));
}

#[test]
fn reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth(p);
    let args = with_data(&["bootstrap-ci", "--iterations", "40", "--seed", "11"]);
    let a = run(p, &args);
    let b = run(p, &args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = run(p, &with_data(&["bootstrap-ci", "--iterations", "40", "--seed", "12"]));
    assert_ne!(a.stdout, c.stdout);
}
