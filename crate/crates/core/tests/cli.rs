use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn morin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn run(scenario: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--scenario",
        scenario,
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(extra);
    morin(&args)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn sphere_height_passes_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("s2-height", dir.path(), &["--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["status"], "pass");
    assert_eq!(r["signed_sum"]["lhs"], 2);
    assert_eq!(r["strata"][0]["chi_morse"], 2);
    assert_eq!(r["strata"][1]["chi_morse"], 0);
    for f in ["strata.csv", "critical.csv", "curves.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let critical = std::fs::read_to_string(dir.path().join("critical.csv")).unwrap();
    assert!(critical.starts_with("x0,x1,x2,stratum,k,sign,index,correct,inward_into,eta_sign\n"));
    assert_eq!(critical.lines().count(), 1 + 2 + 2);

    let e = morin(&["explain", dir.path().join("report.json").to_str().unwrap()]);
    assert_eq!(e.status.code(), Some(0));
    let text = stdout(&e);
    assert!(
        text.contains("signed Euler sum over odd strata: 2 = 2 - 0 ✓"),
        "{text}"
    );
    assert!(
        text.contains("fold-only equality chi(M) = chi(A1+) - chi(A1-): 2 = 2 - 0 ✓"),
        "{text}"
    );
}

#[test]
fn cusp_scenario_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("s3-cusps", dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert!(curves.starts_with("curve,vertex,x0,x1,x2,x3,degeneracy,sign\n"));
    assert!(curves.contains(",plus\n") && curves.contains(",minus\n"));
    let strata = std::fs::read_to_string(dir.path().join("strata.csv")).unwrap();
    assert_eq!(
        strata
            .lines()
            .filter(|l| l.contains(",2,unsigned,"))
            .count(),
        2
    );
    let r = report(dir.path());
    assert!(r["fold_equality"].is_null());
    let text = stdout(&morin(&[
        "explain",
        dir.path().join("report.json").to_str().unwrap(),
    ]));
    assert!(!text.contains("fold-only equality"));
    assert!(
        text.contains("perturbation certificates cancel: 2 certificate(s) ✓"),
        "{text}"
    );
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, threads) in dirs.iter().zip(["1", "4", "4"]) {
        let o = Command::new(env!("CARGO_BIN_EXE_morin"))
            .args(["run", "--scenario", "s3-cusps", "--seed", "7", "--out"])
            .arg(dir.path())
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    for f in ["report.json", "strata.csv", "critical.csv", "curves.csv"] {
        assert_eq!(read(&dirs[0], f), read(&dirs[1], f), "{f}");
        assert_eq!(read(&dirs[1], f), read(&dirs[2], f), "{f}");
    }
}

#[test]
fn even_codimension_exits_64() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&fixture("s3-even.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(64));
    assert!(
        stderr(&o).contains("hypothesis violated: m - n must be odd"),
        "{}",
        stderr(&o)
    );
    assert_eq!(report(dir.path())["exit_code"], 64);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(
        morin(&["run", "--scenario", "s2-height"]).status.code(),
        Some(64)
    );
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("no-such", dir.path(), &[]).status.code(), Some(64));
    assert_eq!(report(dir.path())["status"], "error");
}

#[test]
fn singular_constraint_exits_65() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&fixture("s2-squared.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(65), "{}", stderr(&o));
}

#[test]
fn non_morin_map_exits_66() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&fixture("torus-flat.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(66), "{}", stderr(&o));
    assert!(stderr(&o).contains("not Morin"));
}

#[test]
fn exhausted_genericity_exits_2_and_explains_audits() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &fixture("s2-birth.json"),
        dir.path(),
        &["--max-resamples", "3"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["status"], "genericity-exhausted");
    assert!(!r["failures"].as_array().unwrap().is_empty());
    let text = stdout(&morin(&[
        "explain",
        dir.path().join("report.json").to_str().unwrap(),
    ]));
    assert!(text.contains("failed audit items:"));
    assert!(
        text.contains("[linear functionals are Morse on every stratum] covector seed 2:"),
        "{text}"
    );
}

#[test]
fn wrong_expected_chi_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&fixture("s2-wrong-chi.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    let r = report(dir.path());
    assert_eq!(r["status"], "identity-violated");
    let text = stdout(&morin(&[
        "explain",
        dir.path().join("report.json").to_str().unwrap(),
    ]));
    assert!(
        text.contains("✗ Morse count on M against the expected Euler characteristic"),
        "{text}"
    );
}

#[test]
fn unwritable_output_exits_74() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "").unwrap();
    let o = run("s2-height", &file.join("sub"), &[]);
    assert_eq!(o.status.code(), Some(74));
    assert_eq!(
        morin(&["explain", dir.path().join("missing.json").to_str().unwrap()])
            .status
            .code(),
        Some(74)
    );
}

#[test]
fn listing_with_and_without_custom_directory() {
    let empty = tempfile::tempdir().unwrap();
    let bundled_only = stdout(&morin(&["list"]));
    let with_empty = morin(&["list", empty.path().to_str().unwrap()]);
    assert_eq!(with_empty.status.code(), Some(0));
    assert_eq!(stdout(&with_empty), bundled_only);
    for (name, m, n) in [
        ("s2-height", "2", "1"),
        ("torus-height", "2", "1"),
        ("s3-proj", "3", "2"),
        ("s4-height", "4", "1"),
        ("s3-cusps", "3", "2"),
    ] {
        let line = bundled_only
            .lines()
            .find(|l| l.split_whitespace().nth(1) == Some(name))
            .unwrap();
        let cols: Vec<&str> = line.split_whitespace().collect();
        assert_eq!((cols[2], cols[3]), (m, n), "{line}");
    }

    let custom = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("s2-wrong-chi.json"), custom.path().join("a.json")).unwrap();
    std::fs::write(custom.path().join("notes.txt"), "ignored").unwrap();
    let text = stdout(&morin(&["list", custom.path().to_str().unwrap()]));
    assert_eq!(text.lines().count(), bundled_only.lines().count() + 1);
    let last: PathBuf = custom.path().join("a.json");
    assert!(text
        .lines()
        .last()
        .unwrap()
        .starts_with(last.to_str().unwrap()));
}
