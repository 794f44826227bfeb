//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::time::{Duration, Instant};

use morin::euler::{analyze, Analysis};
use morin::morse::MAX_RESAMPLES;
use morin::scenario::{bundled, MorinScenario, BUNDLED};
use morin::strata::Sign;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Run {
    seed: u64,
    elapsed: Duration,
    result: Result<Analysis, morin::Error>,
}

struct Outcome {
    criterion: usize,
    title: &'static str,
    failures: Vec<String>,
    detail: String,
}

fn runs_for(s: &MorinScenario) -> Vec<Run> {
    SEEDS
        .iter()
        .map(|&seed| {
            let t = Instant::now();
            let result = analyze(s, seed, MAX_RESAMPLES);
            Run {
                seed,
                elapsed: t.elapsed(),
                result,
            }
        })
        .collect()
}

fn ok(run: &Run) -> Result<&Analysis, String> {
    run.result
        .as_ref()
        .map_err(|e| format!("seed {}: {e}", run.seed))
}

struct Corpus {
    scenarios: Vec<(MorinScenario, Vec<Run>)>,
}

impl Corpus {
    fn get(&self, name: &str) -> &(MorinScenario, Vec<Run>) {
        self.scenarios
            .iter()
            .find(|(s, _)| s.name == name)
            .expect("bundled scenario")
    }
}

fn identity_n1(c: &Corpus) -> Outcome {
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for (name, chi, plus, minus) in [
        ("s2-height", 2, 2, 0),
        ("torus-height", 0, 2, 2),
        ("s4-height", 2, 6, 4),
    ] {
        let (_, runs) = c.get(name);
        let run = &runs[0];
        let a = match ok(run) {
            Ok(a) => a,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        let r = &a.report;
        let p = r.stratum(1, Sign::Plus).map_or(i64::MIN, |x| x.chi_morse);
        let m = r.stratum(1, Sign::Minus).map_or(i64::MIN, |x| x.chi_morse);
        if (r.signed_sum.lhs, p, m) != (chi, plus, minus) || !r.signed_sum.holds {
            failures.push(format!("{name}: {} = {p} - {m}", r.signed_sum.lhs));
        }
        if name == "s4-height" && a.morse.on_manifold.len() < 6 {
            failures.push(format!(
                "{name}: only {} critical points",
                a.morse.on_manifold.len()
            ));
        }
        if run.elapsed >= Duration::from_secs(10) {
            failures.push(format!("{name}: {:.2?}", run.elapsed));
        }
        detail.push(format!("{name} {chi}={p}-{m} {:.2?}", run.elapsed));
    }
    Outcome {
        criterion: 1,
        title: "signed identity for n = 1",
        failures,
        detail: detail.join(", "),
    }
}

fn identity_fold_only_n2(c: &Corpus) -> Outcome {
    let mut failures = Vec::new();
    let (_, runs) = c.get("s3-proj");
    let run = &runs[0];
    let mut detail = String::new();
    match ok(run) {
        Err(e) => failures.push(e),
        Ok(a) => {
            let st = &a.stratification;
            let r = &a.report;
            if st.curves.len() != 1 || st.circles.len() != 1 || !st.cusps.is_empty() {
                failures.push(format!(
                    "{} curves, {} circles, {} cusps",
                    st.curves.len(),
                    st.circles.len(),
                    st.cusps.len()
                ));
            }
            let p = r.stratum(1, Sign::Plus).map_or(i64::MIN, |x| x.chi_morse);
            let m = r.stratum(1, Sign::Minus).map_or(i64::MIN, |x| x.chi_morse);
            if (r.signed_sum.lhs, p, m) != (0, 0, 0) {
                failures.push(format!("{} = {p} - {m}", r.signed_sum.lhs));
            }
            let gap = st.curves.iter().map(|c| c.closure_gap).fold(0.0, f64::max);
            if gap > 1e-6 {
                failures.push(format!("closure gap {gap:.2e}"));
            }
            if run.elapsed >= Duration::from_secs(60) {
                failures.push(format!("{:.2?}", run.elapsed));
            }
            detail = format!(
                "s3-proj 0={p}-{m}, 1 circle, closure gap {gap:.1e}, {:.2?}",
                run.elapsed
            );
        }
    }
    Outcome {
        criterion: 2,
        title: "signed identity for n = 2, fold only",
        failures,
        detail,
    }
}

fn identity_cusps(c: &Corpus) -> Outcome {
    let mut failures = Vec::new();
    let (_, runs) = c.get("s3-cusps");
    let run = &runs[0];
    let mut detail = String::new();
    match ok(run) {
        Err(e) => failures.push(e),
        Ok(a) => {
            let st = &a.stratification;
            let r = &a.report;
            if st.cusps.len() < 2 {
                failures.push(format!("{} cusps", st.cusps.len()));
            }
            if st.audit.boundary_violations != 0 {
                failures.push(format!(
                    "{} boundary violations",
                    st.audit.boundary_violations
                ));
            }
            let p = r.stratum(1, Sign::Plus).map_or(i64::MIN, |x| x.chi_morse);
            let m = r.stratum(1, Sign::Minus).map_or(i64::MIN, |x| x.chi_morse);
            if r.signed_sum.lhs != 0 || p - m != 0 {
                failures.push(format!("{} = {p} - {m}", r.signed_sum.lhs));
            }
            for row in &r.strata {
                if row.chi_oracle != Some(row.chi_morse) {
                    failures.push(format!(
                        "A_{}^{}: morse {} vs count {:?}",
                        row.k,
                        row.sign.as_str(),
                        row.chi_morse,
                        row.chi_oracle
                    ));
                }
            }
            detail = format!(
                "s3-cusps {} cusps, {} arcs, 0={p}-{m}, oracle agrees, {:.2?}",
                st.cusps.len(),
                st.arcs.len(),
                run.elapsed
            );
        }
    }
    Outcome {
        criterion: 3,
        title: "signed identity for n = 2 with cusps",
        failures,
        detail,
    }
}

fn all_runs(c: &Corpus) -> impl Iterator<Item = (&MorinScenario, &Run)> {
    c.scenarios
        .iter()
        .flat_map(|(s, runs)| runs.iter().map(move |r| (s, r)))
}

fn mod2(c: &Corpus) -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for (s, run) in all_runs(c) {
        match ok(run) {
            Err(e) => failures.push(format!("{}: {e}", s.name)),
            Ok(a) => {
                checked += 1;
                if !a.report.mod2_congruence.holds {
                    failures.push(format!("{} seed {}", s.name, run.seed));
                }
            }
        }
    }
    Outcome {
        criterion: 4,
        title: "mod-2 congruence on every bundled scenario",
        failures,
        detail: format!("{checked} runs"),
    }
}

fn fold_equality(c: &Corpus) -> Outcome {
    let mut failures = Vec::new();
    let mut names = Vec::new();
    for (s, run) in all_runs(c) {
        let Ok(a) = ok(run) else { continue };
        if !a.stratification.cusps.is_empty() {
            continue;
        }
        if run.seed == 0 {
            names.push(s.name.clone());
        }
        match &a.report.fold_equality {
            Some(f) if f.holds => {}
            other => failures.push(format!("{} seed {}: {other:?}", s.name, run.seed)),
        }
    }
    Outcome {
        criterion: 5,
        title: "fold-only equality on every fold-only scenario",
        failures,
        detail: names.join(", "),
    }
}

fn audits(c: &Corpus) -> Outcome {
    let mut failures = Vec::new();
    let (mut parity_checked, mut critical_on_m, mut max_set_distance, mut max_resamples) =
        (0, 0, 0.0f64, 0);
    for (s, run) in all_runs(c) {
        let a = match ok(run) {
            Ok(a) => a,
            Err(e) => {
                failures.push(format!("{}: {e}", s.name));
                continue;
            }
        };
        let md = &a.morse;
        parity_checked += md.parity.checked;
        critical_on_m += md.on_manifold.len();
        if md.parity.checked != md.on_manifold.len() || !md.parity.violations.is_empty() {
            failures.push(format!(
                "{} seed {}: parity {} of {} checked, {} violations",
                s.name,
                run.seed,
                md.parity.checked,
                md.on_manifold.len(),
                md.parity.violations.len()
            ));
        }
        if !md.set_equality.unmatched.is_empty() || md.set_equality.max_distance > 1e-6 {
            failures.push(format!("{} seed {}: set equality", s.name, run.seed));
        }
        max_set_distance = max_set_distance.max(md.set_equality.max_distance);
        max_resamples = max_resamples.max(a.report.resamples);
        if !md.genericity.passed {
            failures.push(format!("{} seed {}: genericity", s.name, run.seed));
        }
    }
    Outcome {
        criterion: 6,
        title: "index parity, critical-set equality and genericity audits",
        failures,
        detail: format!(
            "parity {parity_checked}/{critical_on_m} critical points, set distance {max_set_distance:.1e}, at most {max_resamples} resample(s)"
        ),
    }
}

fn sign_machinery(c: &Corpus) -> Outcome {
    let mut failures = Vec::new();
    let (mut cusps, mut certs) = (0, 0);
    for (s, run) in all_runs(c) {
        let Ok(a) = ok(run) else {
            failures.push(format!("{} seed {}", s.name, run.seed));
            continue;
        };
        let md = &a.morse;
        cusps += a.stratification.cusps.len();
        certs += md.certificates.len();
        if md.eta.len() != a.stratification.cusps.len() || !md.eta_holds() {
            failures.push(format!(
                "{} seed {}: eta checked at {} of {} cusps",
                s.name,
                run.seed,
                md.eta.len(),
                a.stratification.cusps.len()
            ));
        }
        if !md.certificates_cancel() {
            failures.push(format!(
                "{} seed {}: certificate does not cancel",
                s.name, run.seed
            ));
        }
    }
    Outcome {
        criterion: 7,
        title: "eta sign at cusps and perturbation certificates",
        failures,
        detail: format!("{cusps} cusp visits, {certs} certificates"),
    }
}

fn finite_difference_failures(s: &MorinScenario) -> Vec<String> {
    let big_n = s.ambient_dim();
    let exprs: Vec<_> = s.components.iter().chain(&s.manifold.constraints).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let h = 1e-5;
    let mut out = Vec::new();
    for _ in 0..100 {
        let x: Vec<f64> = (0..big_n)
            .map(|_| rng.random_range(-128i32..=128) as f64 / 64.0)
            .collect();
        for e in &exprs {
            let f = e.to_poly().compile::<f64>();
            for (i, g) in e.gradient(big_n).iter().enumerate() {
                let exact = g.evaluate(&x).unwrap();
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let fd = (f.eval(&xp) - f.eval(&xm)) / (2.0 * h);
                if (fd - exact).abs() > 1e-6 * exact.abs().max(1.0) {
                    out.push(format!("{}: d/dx{i} {e} at {x:?}: {fd} vs {exact}", s.name));
                }
            }
        }
    }
    out
}

fn oracles(c: &Corpus) -> Outcome {
    let mut failures = Vec::new();
    for (s, runs) in &c.scenarios {
        failures.extend(finite_difference_failures(s));
        let chis: Vec<Vec<i64>> = runs
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .map(|a| {
                let r = &a.report;
                let mut v = vec![r.chi_m_morse];
                v.extend(r.strata.iter().map(|x| x.chi_morse));
                v.extend(r.mod2_congruence.closures.iter().map(|x| x.chi));
                v
            })
            .collect();
        if chis.len() < SEEDS.len() {
            failures.push(format!(
                "{}: {} of {} seeds accepted",
                s.name,
                chis.len(),
                SEEDS.len()
            ));
        }
        if chis.windows(2).any(|w| w[0] != w[1]) {
            failures.push(format!(
                "{}: chi values differ across seeds {chis:?}",
                s.name
            ));
        }
    }
    Outcome {
        criterion: 8,
        title: "finite-difference gradients and seed independence",
        failures,
        detail: format!(
            "{} scenarios x 100 points, seeds {:?}",
            c.scenarios.len(),
            SEEDS
        ),
    }
}

fn main() {
    let started = Instant::now();
    let corpus = Corpus {
        scenarios: BUNDLED
            .iter()
            .map(|(name, _)| {
                let s = bundled(name).expect("bundled scenario parses");
                let runs = runs_for(&s);
                (s, runs)
            })
            .collect(),
    };
    let outcomes = [
        identity_n1(&corpus),
        identity_fold_only_n2(&corpus),
        identity_cusps(&corpus),
        mod2(&corpus),
        fold_equality(&corpus),
        audits(&corpus),
        sign_machinery(&corpus),
        oracles(&corpus),
    ];
    let mut all = true;
    for o in &outcomes {
        let pass = o.failures.is_empty();
        all &= pass;
        println!(
            "{} criterion {}: {} [{}]",
            if pass { "PASS" } else { "FAIL" },
            o.criterion,
            o.title,
            o.detail
        );
        for f in o.failures.iter().take(10) {
            println!("    {f}");
        }
    }
    println!("acceptance finished in {:.2?}", started.elapsed());
    if !all {
        std::process::exit(1);
    }
}
