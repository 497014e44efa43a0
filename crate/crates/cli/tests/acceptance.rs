//! Acceptance criteria, one line per criterion.
//!
//! Runs without the libtest harness so every verdict is printed even when
//! the run passes. Exits non-zero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use cyclecost_core::degradation::lifetime_months;
use cyclecost_core::market::{annualize, revenue_breakdown, EconomicsReport, MarketParams, RegulationSignal};
use cyclecost_core::oracle::{
    run_convexity, run_difference_bound, run_gradient, run_merge, run_perturbation, run_signed_aggregation,
    run_signed_aggregation_single, run_superadditivity, solver_gap_cases, suite_models, PropertyReport,
    CONVEXITY_TOLERANCE, GRADIENT_TOLERANCE, PROPERTY_TOLERANCE, SOLVER_GAP_SLACK,
};
use cyclecost_core::rainflow::{count_cycles_raw, CycleKind, Direction};
use cyclecost_core::BatteryParams;
use serde_json::Value;

const SEED: u64 = 20;

struct Verdict {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self { pass, summary: summary.into(), details: vec![] }
    }

    fn with(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }
}

fn report_line(r: &PropertyReport) -> String {
    format!(
        "{:<34} {:<28} n={:<6} violations={:<5} max_excess={:+.3e}",
        r.property,
        r.model.as_deref().unwrap_or("-"),
        r.samples,
        r.violations,
        r.max_excess
    )
}

fn rainflow_fixture() -> Verdict {
    let profile = [0.2, 0.5, 0.1, 0.9, 0.3, 0.6, 0.0, 0.8, 0.2];
    use CycleKind::{FullMember, Half};
    use Direction::{Charge, Discharge};
    let want = [
        (0.3, Charge, Half),
        (0.4, Discharge, Half),
        (0.8, Charge, Half),
        (0.9, Discharge, Half),
        (0.3, Charge, FullMember),
        (0.3, Discharge, FullMember),
        (0.8, Charge, Half),
        (0.6, Discharge, Half),
    ];
    let cs = count_cycles_raw(&profile);
    let got: Vec<_> = cs.half_cycles.iter().map(|h| (h.depth, h.direction, h.kind)).collect();
    let ok = got.len() == want.len()
        && got.iter().zip(&want).all(|(g, w)| (g.0 - w.0).abs() < 1e-12 && g.1 == w.1 && g.2 == w.2);
    let depths: Vec<String> = got
        .iter()
        .map(|(d, _, k)| if *k == FullMember { format!("{d:.1}(full)") } else { format!("{d:.1}") })
        .collect();
    Verdict::new(ok, format!("rainflow fixture: {}", depths.join(", ")))
}

fn convexity_suite() -> Verdict {
    let start = Instant::now();
    let reports: Vec<PropertyReport> = suite_models().iter().map(|m| run_convexity(SEED, 100_000, m)).collect();
    let elapsed = start.elapsed();
    let ok = reports.iter().all(|r| r.passed() && r.tolerance == CONVEXITY_TOLERANCE && r.samples == 100_000)
        && elapsed < Duration::from_secs(60);
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    Verdict::new(
        ok,
        format!("convexity: 3 models x 1e5 cases, {violations} violations at 1e-8, {:.1} s (limit 60 s)", elapsed.as_secs_f64()),
    )
    .with(reports.iter().map(report_line).collect())
}

fn appendix_properties() -> Verdict {
    let mut reports = vec![];
    for m in suite_models() {
        reports.push(run_superadditivity(SEED, 10_000, &m));
        reports.push(run_difference_bound(SEED, 10_000, &m));
        reports.push(run_signed_aggregation(SEED, 10_000, &m));
    }
    reports.push(run_perturbation(SEED, 10_000));
    for m in suite_models() {
        reports.push(run_merge(SEED, 10_000, &m));
    }
    let ok = reports.iter().all(|r| r.passed() && r.tolerance == PROPERTY_TOLERANCE);
    let failing: Vec<String> =
        reports.iter().filter(|r| !r.passed()).map(|r| format!("{}/{}", r.property, r.model.as_deref().unwrap_or("-"))).collect();
    let mut details: Vec<String> = reports.iter().map(report_line).collect();
    for r in reports.iter().filter(|r| !r.passed()) {
        if let Some(v) = r.failures.first() {
            details.push(format!("worst {} case: {}", r.property, serde_json::to_string(&v.inputs).unwrap()));
        }
    }
    if !ok {
        let g = |x: f64| x * x;
        details.push(format!(
            "closed-form case: x = [1, 1, -0.5, -0.5], g(x) = x^2 gives g(sum) = {} < {} (every |x_i| <= sum = 1)",
            g(1.0),
            g(1.0) + g(1.0) - g(0.5) - g(0.5)
        ));
    }
    // informational: the bound with a single negative term
    for m in suite_models() {
        details.push(format!("(info) {}", report_line(&run_signed_aggregation_single(SEED, 10_000, &m))));
    }
    let summary = if ok {
        format!("function, perturbation and merge properties: {} checks, 0 violations at 1e-10", reports.len())
    } else {
        format!("function, perturbation and merge properties: violated by {}", failing.join(", "))
    };
    Verdict::new(ok, summary).with(details)
}

fn subgradient_check() -> Verdict {
    let r = run_gradient(SEED, 50);
    let ok = r.passed() && r.samples == 50 && r.tolerance == GRADIENT_TOLERANCE;
    Verdict::new(
        ok,
        format!(
            "subgradient vs finite differences: {} points ({} kinked draws skipped), max relative error {:.2e} (limit 1e-4)",
            r.samples, r.skipped, r.max_excess
        ),
    )
}

fn solver_optimality() -> Verdict {
    let cases = match solver_gap_cases(SEED, 20) {
        Ok(c) => c,
        Err(e) => return Verdict::new(false, format!("solver vs grid: {e}")),
    };
    let mut details = vec![];
    let mut ok = cases.len() == 20;
    let mut slowest = Duration::ZERO;
    for (i, (_, case)) in cases.iter().enumerate() {
        let c = case.check();
        let holds = c.holds(SOLVER_GAP_SLACK) && case.solve_time < Duration::from_secs(5);
        ok &= holds;
        slowest = slowest.max(case.solve_time);
        details.push(format!(
            "instance {i:>2}: objective solver {:>9.4}  grid {:>9.4}  bound {:.4}  solve {:.2} s",
            case.solver_objective,
            case.grid_objective,
            case.gap_bound,
            case.solve_time.as_secs_f64()
        ));
    }
    let worst = cases.iter().map(|(_, c)| c.check().excess()).fold(f64::NEG_INFINITY, f64::max);
    Verdict::new(
        ok,
        format!(
            "solver vs brute-force grid: 20 T=6 instances, worst U_best - U_grid - G^2 a/2 = {worst:+.4}, slowest solve {:.2} s",
            slowest.as_secs_f64()
        ),
    )
    .with(details)
}

fn economics() -> Verdict {
    let battery = BatteryParams::regulation_default();
    let market = MarketParams { capacity_price: 50.0, capacity_mw: 1.0, penalty_price: 0.0, ..MarketParams::regulation_default() };
    let signal = RegulationSignal::new(vec![0.0; 1800]).unwrap();
    let zeros = vec![0.0; 1800];
    let rev = revenue_breakdown(&zeros, &zeros, &market, &signal, battery.interval_hours).unwrap();
    let horizon = EconomicsReport::new(1800.0 * battery.interval_hours, rev, 0.0, 0.0, battery.replacement_cost());
    let annual = annualize(&horizon).unwrap().regulation_service_payment;
    let replacement = battery.replacement_cost();
    let short = lifetime_months(300_100.0, replacement).unwrap();
    let long = lifetime_months(162_900.0, replacement).unwrap();
    let ok = (annual - 438_000.0).abs() <= 1.0
        && (short - 6.0).abs() <= 0.1
        && (long - 11.1).abs() <= 0.1
        && (replacement - 150_000.0).abs() < 1e-6;
    Verdict::new(
        ok,
        format!(
            "economics: annual payment ${annual:.2}, lifetime {short:.2} and {long:.2} months, replacement cost ${replacement:.0}"
        ),
    )
}

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclecost"))
        .current_dir(dir)
        .env_remove("CYCLECOST_CONFIG")
        .args(args)
        .output()
        .expect("cyclecost runs")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn synthetic_benchmark(dir: &Path) -> Verdict {
    let mut ok = true;
    let mut details = vec![];
    let mut margins = vec![];
    let mut slowest = Duration::ZERO;
    for seed in 0..10u64 {
        let out = format!("bench-{seed}");
        let start = Instant::now();
        let o = cli(dir, &["benchmark", "--seed", &seed.to_string(), "--out", &out]);
        let elapsed = start.elapsed();
        slowest = slowest.max(elapsed);
        if !o.status.success() {
            return Verdict::new(false, format!("benchmark seed {seed} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.join(&out).join("benchmark.json")).unwrap()).unwrap();
        let col = |name: &str| report["columns"].as_array().unwrap().iter().find(|c| c["policy"] == name).unwrap().clone();
        let utility = |c: &Value| c["annual"]["total_regulation_utility"].as_f64().unwrap();
        let std = |c: &Value| c["soc"]["std"].as_f64().unwrap();
        let (rf, nc, lin) = (col("rainflow"), col("no-cost"), col("linear"));
        let best_other = utility(&nc).max(utility(&lin));
        let margin = utility(&rf) - best_other;
        let seed_ok = margin > 0.0 && std(&rf) < std(&nc) && elapsed < Duration::from_secs(300);
        ok &= seed_ok;
        margins.push(margin / best_other.abs().max(1.0));
        details.push(format!(
            "seed {seed}: utility k$ rainflow {:>7.1}  no-cost {:>7.1}  linear {:>7.1}  | soc std {:.4} vs {:.4}  | {:.1} s",
            utility(&rf) / 1e3,
            utility(&nc) / 1e3,
            utility(&lin) / 1e3,
            std(&rf),
            std(&nc),
            elapsed.as_secs_f64()
        ));
    }
    let lo = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Verdict::new(
        ok,
        format!(
            "synthetic benchmark: 10 seeds, utility margin over the best benchmark min {:+.0}% median {:+.0}% max {:+.0}%, slowest run {:.1} s",
            100.0 * lo,
            100.0 * median(margins.clone()),
            100.0 * hi,
            slowest.as_secs_f64()
        ),
    )
    .with(details)
}

fn files_identical(a: &Path, b: &Path, names: &[&str]) -> Vec<String> {
    names
        .iter()
        .filter(|n| !matches!((std::fs::read(a.join(n)), std::fs::read(b.join(n))), (Ok(x), Ok(y)) if x == y))
        .map(|n| n.to_string())
        .collect()
}

fn determinism(dir: &Path) -> Verdict {
    let mut differing = vec![];
    let bench = |out: &str| cli(dir, &["benchmark", "--seed", "3", "--out", out]);
    let (a, b) = (bench("det-bench-a"), bench("det-bench-b"));
    if a.stdout != b.stdout || a.status.code() != b.status.code() {
        differing.push("benchmark stdout".to_string());
    }
    differing.extend(
        files_identical(&dir.join("det-bench-a"), &dir.join("det-bench-b"), &["benchmark.json", "benchmark.txt", "power.csv", "soc.csv"])
            .into_iter()
            .map(|f| format!("benchmark {f}")),
    );
    let verify = |out: &str| cli(dir, &["verify", "all", "--seed", "3", "--format", "json", "--out", out]);
    let (a, b) = (verify("det-verify-a"), verify("det-verify-b"));
    if a.stdout != b.stdout || a.status.code() != b.status.code() {
        differing.push("verify stdout".to_string());
    }
    differing.extend(
        files_identical(&dir.join("det-verify-a"), &dir.join("det-verify-b"), &["verify.json"])
            .into_iter()
            .map(|f| format!("verify {f}")),
    );
    let ok = differing.is_empty();
    let summary = if ok {
        "determinism: benchmark and verify outputs byte-identical across two runs".to_string()
    } else {
        format!("determinism: differing outputs: {}", differing.join(", "))
    };
    Verdict::new(ok, summary)
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("AC1", Box::new(rainflow_fixture)),
        ("AC2", Box::new(convexity_suite)),
        ("AC3", Box::new(appendix_properties)),
        ("AC4", Box::new(subgradient_check)),
        ("AC5", Box::new(solver_optimality)),
        ("AC6", Box::new(economics)),
        ("AC7", Box::new(|| synthetic_benchmark(dir.path()))),
        ("AC8", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = vec![];
    for (id, run) in &criteria {
        let v = run();
        println!("{id} {} {}", if v.pass { "PASS" } else { "FAIL" }, v.summary);
        for d in &v.details {
            println!("      {d}");
        }
        if !v.pass {
            failed.push(*id);
        }
    }
    println!(
        "acceptance: {}/{} criteria pass{}",
        criteria.len() - failed.len(),
        criteria.len(),
        if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(" ")) }
    );
    if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
