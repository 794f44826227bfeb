//! Command-line front end: `run`, `list` and `explain`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0  | every identity and audit holds |
//! | 2  | no generic covector within `--max-resamples` attempts |
//! | 3  | an identity or audit is violated, or a numerical inconsistency |
//! | 64 | usage, expression, scenario or hypothesis error |
//! | 65 | constraints not regular, or projection onto `M` failed |
//! | 66 | map not Morin, or outside the supported range |
//! | 74 | I/O error |

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::euler::{self, Analysis};
use crate::morse::MAX_RESAMPLES;
use crate::scenario::{self, MorinScenario};
use crate::strata::{self, Sign};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "morin",
    version,
    about = "Morin strata and signed Euler-characteristic checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline on one scenario and write the artifacts.
    Run(RunArgs),
    /// List bundled scenarios and any scenario files in DIR.
    List { dir: Option<PathBuf> },
    /// Summarize a report.json.
    Explain { report: PathBuf },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Newton residual tolerance.
    #[arg(long)]
    pub tol_residual: Option<f64>,
    #[arg(long, default_value_t = MAX_RESAMPLES, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub max_resamples: usize,
}

/// Resolved `run` configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: String,
    pub seed: u64,
    pub tol_residual: Option<f64>,
    pub max_resamples: usize,
    pub out: PathBuf,
}

impl From<RunArgs> for RunConfig {
    fn from(a: RunArgs) -> Self {
        RunConfig {
            scenario: a.scenario,
            seed: a.seed,
            tol_residual: a.tol_residual,
            max_resamples: a.max_resamples,
            out: a.out,
        }
    }
}

/// Loads a scenario file, falling back to a bundled scenario of that name.
pub fn resolve_scenario(arg: &str) -> Result<MorinScenario> {
    let path = Path::new(arg);
    if path.exists() {
        return MorinScenario::load(path);
    }
    let name = arg.strip_suffix(".json").unwrap_or(arg);
    let name = Path::new(name)
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or(name);
    scenario::bundled(name)
        .ok_or_else(|| Error::Scenario(format!("no scenario file or bundled scenario `{arg}`")))
}

/// Report written when the pipeline stops before the identities are checked.
#[derive(Debug, Serialize)]
pub struct FailureReport {
    pub status: String,
    pub scenario: String,
    pub seed: u64,
    pub exit_code: i32,
    pub error: String,
    pub failures: Vec<String>,
}

fn failure_report(scenario: &str, seed: u64, e: &Error) -> FailureReport {
    let (status, failures) = match e {
        Error::GenericityExhausted { failures, .. } => ("genericity-exhausted", failures.clone()),
        _ => ("error", Vec::new()),
    };
    FailureReport {
        status: status.into(),
        scenario: scenario.into(),
        seed,
        exit_code: e.exit_code(),
        error: e.to_string(),
        failures,
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

fn coord_header(prefix: &[&str], n: usize, suffix: &[&str]) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..n).map(|i| format!("x{i}")))
        .chain(suffix.iter().map(|s| s.to_string()))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

/// `strata.csv`: `x0..x{N-1}, k, sign, residual`, one row per located
/// singular point (all fold points for `n = 1`, a fold sample cloud for
/// `n >= 2`, then the cusps).
pub fn write_strata_csv(path: &Path, a: &Analysis, big_n: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(coord_header(&[], big_n, &["k", "sign", "residual"]))
        .map_err(csv_err)?;
    let st = &a.stratification;
    for p in st.fold_points.iter().chain(&st.cusps) {
        let mut row: Vec<String> = p.x.iter().map(|&v| fmt_f(v)).collect();
        row.extend([
            p.depth.to_string(),
            p.sign.as_str().into(),
            fmt_f(p.residual),
        ]);
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `critical.csv`: `x0..x{N-1}, stratum, k, sign, index, correct,
/// inward_into, eta_sign`. `stratum` is the depth of the stratum the
/// function is restricted to, `k` the depth of the point.
pub fn write_critical_csv(path: &Path, a: &Analysis, big_n: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(coord_header(
        &[],
        big_n,
        &[
            "stratum",
            "k",
            "sign",
            "index",
            "correct",
            "inward_into",
            "eta_sign",
        ],
    ))
    .map_err(csv_err)?;
    for r in a.morse.on_manifold.iter().chain(&a.morse.on_singular_set) {
        let mut row: Vec<String> = r.x.iter().map(|&v| fmt_f(v)).collect();
        row.extend([
            r.stratum_depth.to_string(),
            r.point_depth.to_string(),
            r.sign.as_str().into(),
            r.morse_index.to_string(),
            r.correct.map_or(String::new(), |c| c.to_string()),
            r.inward_into.as_str().into(),
            r.eta_sign.map_or(String::new(), |e| e.to_string()),
        ]);
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `curves.csv`: `curve, vertex, x0..x{N-1}, degeneracy, sign`, vertices of
/// each traced fold curve in order (the curve closes back to vertex 0).
pub fn write_curves_csv(path: &Path, a: &Analysis, big_n: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(coord_header(
        &["curve", "vertex"],
        big_n,
        &["degeneracy", "sign"],
    ))
    .map_err(csv_err)?;
    for (ci, c) in a.stratification.curves.iter().enumerate() {
        for (vi, v) in c.vertices.iter().enumerate() {
            let d = c.degeneracy[vi];
            let mut row = vec![ci.to_string(), vi.to_string()];
            row.extend(v[..big_n].iter().map(|&x| fmt_f(x)));
            row.push(fmt_f(d));
            row.push(if d > 0.0 { "plus" } else { "minus" }.into());
            w.write_record(row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.into()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn pipeline(cfg: &RunConfig) -> Result<(MorinScenario, Analysis)> {
    let mut s = resolve_scenario(&cfg.scenario)?;
    if let Some(r) = cfg.tol_residual {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Scenario(format!(
                "--tol-residual must be positive, got {r}"
            )));
        }
        s.tolerances.residual = r;
    }
    let a = euler::analyze(&s, cfg.seed, cfg.max_resamples)?;
    Ok((s, a))
}

/// Runs the pipeline and writes `report.json`, `strata.csv`, `critical.csv`
/// and `curves.csv` into `cfg.out`. Returns the exit code; when the
/// pipeline stops early a failure `report.json` is still written.
pub fn run(cfg: &RunConfig) -> Result<i32> {
    fs::create_dir_all(&cfg.out)?;
    let report_path = cfg.out.join("report.json");
    match pipeline(cfg) {
        Ok((s, a)) => {
            let big_n = s.ambient_dim();
            write_json(&report_path, &a.report)?;
            write_strata_csv(&cfg.out.join("strata.csv"), &a, big_n)?;
            write_critical_csv(&cfg.out.join("critical.csv"), &a, big_n)?;
            write_curves_csv(&cfg.out.join("curves.csv"), &a, big_n)?;
            Ok(a.report.exit_code())
        }
        Err(e) => {
            write_json(&report_path, &failure_report(&cfg.scenario, cfg.seed, &e))?;
            Err(e)
        }
    }
}

fn strata_summary(s: &MorinScenario) -> String {
    match strata::stratify(s, 0) {
        Ok(st) if st.n == 1 => format!(
            "A1+ {} pt, A1- {} pt",
            st.count(1, Sign::Plus),
            st.count(1, Sign::Minus)
        ),
        Ok(st) if st.n >= 3 => format!(
            "fold sample {} pt, {} cusp",
            st.fold_points.len(),
            st.cusps.len()
        ),
        Ok(st) => format!(
            "{} circle, {} arc, {} cusp",
            st.circles.len(),
            st.arcs.len(),
            st.cusps.len()
        ),
        Err(e) => format!("error (exit {})", e.exit_code()),
    }
}

/// Table of bundled scenarios followed by the `*.json` files of `dir`
/// (sorted by file name).
pub fn list_scenarios(dir: Option<&Path>) -> Result<String> {
    let mut rows: Vec<[String; 6]> = Vec::new();
    let row = |source: &str, name: &str, s: &Result<MorinScenario>| -> [String; 6] {
        match s {
            Ok(s) => [
                source.into(),
                name.into(),
                s.source_dim().to_string(),
                s.target_dim.to_string(),
                s.manifold
                    .chi_expected
                    .map_or("-".into(), |c| c.to_string()),
                strata_summary(s),
            ],
            Err(e) => [
                source.into(),
                name.into(),
                "-".into(),
                "-".into(),
                "-".into(),
                format!("invalid: {e}"),
            ],
        }
    };
    for (name, text) in scenario::BUNDLED {
        rows.push(row("bundled", name, &MorinScenario::from_json(text)));
    }
    if let Some(dir) = dir {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for p in files {
            let name = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("?")
                .to_string();
            rows.push(row(
                &p.display().to_string(),
                &name,
                &MorinScenario::load(&p),
            ));
        }
    }
    let header = ["source", "name", "m", "n", "chi", "strata"].map(String::from);
    let widths: Vec<usize> = (0..6)
        .map(|i| {
            rows.iter()
                .chain([&header])
                .map(|r| r[i].len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in [&header].into_iter().chain(rows.iter()) {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    Ok(out)
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "✓"
    } else {
        "✗"
    }
}

fn get_i(v: &Value, path: &[&str]) -> Option<i64> {
    path.iter().try_fold(v, |v, k| v.get(k))?.as_i64()
}

fn get_b(v: &Value, path: &[&str]) -> Option<bool> {
    path.iter().try_fold(v, |v, k| v.get(k))?.as_bool()
}

/// Audit an exhausted-genericity failure reason belongs to.
pub fn audit_name(reason: &str) -> &'static str {
    if reason.contains("degenerate critical point") {
        "linear functionals are Morse on every stratum"
    } else if reason.contains("closure of A_2") || reason.contains("is critical for L_a o f on M") {
        "no critical point of L_a o f on M lies on the cusp closure"
    } else if reason.contains("differ") {
        "critical points on M coincide with those on the open fold stratum"
    } else if reason.contains("cusps found") {
        "every cusp is a critical point on the fold closure"
    } else {
        "critical point classification"
    }
}

fn explain_pass(v: &Value, out: &mut String) {
    let _ = writeln!(
        out,
        "scenario {} (m = {}, n = {}), seed {}, covector seed {} after {} resample(s)",
        v["scenario"].as_str().unwrap_or("?"),
        v["source_dim"],
        v["target_dim"],
        v["seed"],
        v["genericity_seed_used"],
        v["resamples"]
    );
    let _ = writeln!(
        out,
        "\n  k  sign   dim  chi(morse)  open  boundary  chi(count)"
    );
    let mut terms = Vec::new();
    for r in v["strata"].as_array().into_iter().flatten() {
        let oracle = r["chi_oracle"]
            .as_i64()
            .map_or("-".to_string(), |o| o.to_string());
        let _ = writeln!(
            out,
            "  {:<2} {:<6} {:<4} {:<11} {:<5} {:<9} {}",
            r["k"].to_string(),
            r["sign"].as_str().unwrap_or("?"),
            r["dimension"].to_string(),
            r["chi_morse"].to_string(),
            r["open_sum"].to_string(),
            r["boundary_sum"].to_string(),
            oracle
        );
        let chi = r["chi_morse"].as_i64().unwrap_or(0);
        let plus = r["sign"] == "plus";
        terms.push(if terms.is_empty() {
            if plus {
                chi.to_string()
            } else {
                format!("-{chi}")
            }
        } else if plus {
            format!("+ {chi}")
        } else {
            format!("- {chi}")
        });
    }
    let _ = writeln!(out);
    let ss = &v["signed_sum"];
    let _ = writeln!(
        out,
        "signed Euler sum over odd strata: {} = {} {}",
        ss["lhs"],
        terms.join(" "),
        mark(ss["holds"].as_bool() == Some(true))
    );
    let m2 = &v["mod2_congruence"];
    let closures: Vec<String> = m2["closures"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|c| c["chi"].to_string())
        .collect();
    let _ = writeln!(
        out,
        "mod-2 congruence with closure strata: {} = {} (mod 2) {}",
        m2["chi_m"],
        closures.join(" + "),
        mark(m2["holds"].as_bool() == Some(true))
    );
    if let Some(fe) = v.get("fold_equality").filter(|f| !f.is_null()) {
        let plus = v["strata"][0]["chi_morse"].as_i64().unwrap_or(0);
        let minus = v["strata"][1]["chi_morse"].as_i64().unwrap_or(0);
        let _ = writeln!(
            out,
            "fold-only equality chi(M) = chi(A1+) - chi(A1-): {} = {} - {} {}",
            fe["lhs"],
            plus,
            minus,
            mark(fe["holds"].as_bool() == Some(true))
        );
    }
    let tele_ok = v["telescoping"]
        .as_array()
        .is_some_and(|t| t.iter().all(|s| s["holds"].as_bool() == Some(true)));
    let _ = writeln!(
        out,
        "telescoping of boundary contributions {}",
        mark(tele_ok)
    );
    let _ = writeln!(
        out,
        "Morse route agrees with direct counting {}",
        mark(get_b(v, &["route_agreement"]) == Some(true))
    );
    let a = &v["audits"];
    let _ = writeln!(out, "\naudits:");
    let _ = writeln!(
        out,
        "  index parity M vs fold stratum: {} checked, {} violation(s) {}",
        a["parity_checked"],
        a["parity_violations"],
        mark(get_i(a, &["parity_violations"]) == Some(0))
    );
    let _ = writeln!(
        out,
        "  critical set on M equals critical set on open fold stratum {}",
        mark(get_i(a, &["set_equality_unmatched"]) == Some(0))
    );
    let _ = writeln!(
        out,
        "  cusps bound one plus and one minus arc: {} violation(s) {}",
        a["strata"]["boundary_violations"],
        mark(get_i(a, &["strata", "boundary_violations"]) == Some(0))
    );
    let _ = writeln!(
        out,
        "  eta sign at cusps: {} checked {}",
        a["eta_checked"],
        mark(get_b(a, &["eta_holds"]) == Some(true))
    );
    let _ = writeln!(
        out,
        "  perturbation certificates cancel: {} certificate(s) {}",
        a["certificates"],
        mark(get_b(a, &["certificates_cancel"]) == Some(true))
    );
    for n in v["notes"].as_array().into_iter().flatten() {
        let _ = writeln!(out, "note: {}", n.as_str().unwrap_or(""));
    }
    let failures: Vec<&str> = v["verdict"]["failures"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|f| f.as_str())
        .collect();
    if failures.is_empty() {
        let _ = writeln!(out, "\nverdict: all identities and audits hold");
    } else {
        let _ = writeln!(out, "\nverdict: violated");
        for f in failures {
            let _ = writeln!(out, "  ✗ {f}");
        }
    }
}

/// Human-readable digest of a `report.json`.
pub fn explain(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
    let mut out = String::new();
    match v["status"].as_str() {
        Some("pass") | Some("identity-violated") => explain_pass(&v, &mut out),
        Some("genericity-exhausted") => {
            let _ = writeln!(
                out,
                "scenario {}, seed {}: no generic covector found (exit {})",
                v["scenario"].as_str().unwrap_or("?"),
                v["seed"],
                v["exit_code"]
            );
            let _ = writeln!(out, "failed audit items:");
            for f in v["failures"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|f| f.as_str())
            {
                let _ = writeln!(out, "  ✗ [{}] {f}", audit_name(f));
            }
        }
        Some("error") => {
            let _ = writeln!(
                out,
                "scenario {}, seed {}: stopped with exit {}: {}",
                v["scenario"].as_str().unwrap_or("?"),
                v["seed"],
                v["exit_code"],
                v["error"].as_str().unwrap_or("")
            );
        }
        _ => {
            return Err(Error::Scenario(format!(
                "{} is not a run report",
                path.display()
            )))
        }
    }
    Ok(out)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(&a.into()),
        Command::List { dir } => list_scenarios(dir.as_deref()).map(|t| {
            print!("{t}");
            0
        }),
        Command::Explain { report } => explain(&report).map(|t| {
            print!("{t}");
            0
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("morin: {e}");
            e.exit_code()
        }
    }
}
