use std::fs::File;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cyclecost_core::config::RunConfig;
use cyclecost_core::degradation::{cost_of_cycles, cost_full_cycles_once};
use cyclecost_core::io::{cycle_records, read_profile_csv, write_columns_csv, write_cycles_json, write_solution_csv};
use cyclecost_core::market::{annualize, policy_follow, EconomicsReport};
use cyclecost_core::oracle::{run_suite_with, suite_models, PropertyReport, Suite};
use cyclecost_core::rainflow::count_cycles;
use cyclecost_core::solver::{soc_trajectory, solve, Solution};
use cyclecost_core::{DispatchProblem, Error, StressModel};
use serde::Serialize;

use crate::output::{table, OutDir};
use crate::{Format, GlobalArgs};

/// 1 for violations and infeasibility, 2 for bad input.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Infeasible(_) | Error::NotInterior(_)) => 1,
        _ => 2,
    }
}

struct Session {
    config: RunConfig,
    out: OutDir,
    format: Format,
}

fn setup(global: &GlobalArgs) -> Result<Session> {
    let mut config = match &global.config {
        Some(p) => RunConfig::from_path(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
        config.solver.seed = seed;
    }
    let dir = global.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let out = OutDir::create(&dir)?;
    Ok(Session { config, out, format: global.format })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = String::new();
    w.push_str(&header.join(","));
    w.push('\n');
    for r in rows {
        w.push_str(&r.join(","));
        w.push('\n');
    }
    Ok(w)
}

fn load_profile(ctx: &Session, path: &Path) -> Result<cyclecost_core::SocProfile> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let profile = read_profile_csv(f, ctx.config.battery_params().interval_hours)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(profile)
}

pub fn count(global: &GlobalArgs, profile: &Path) -> Result<ExitCode> {
    let ctx = setup(global)?;
    let p = load_profile(&ctx, profile)?;
    let cycles = count_cycles(&p);
    ctx.out.write_with("cycles.json", |w| write_cycles_json(w, &cycles))?;
    let records = cycle_records(&cycles);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                format!("{:.6}", r.depth),
                serde_json::to_value(r.direction).unwrap().as_str().unwrap().to_string(),
                serde_json::to_value(r.kind).unwrap().as_str().unwrap().to_string(),
            ]
        })
        .collect();
    match ctx.format {
        Format::Json => print_json(&records)?,
        Format::Csv => print!("{}", csv_string(&["depth", "direction", "kind"], &rows)?),
        Format::Text => {
            let numbered: Vec<Vec<String>> =
                rows.iter().enumerate().map(|(i, r)| [vec![(i + 1).to_string()], r.clone()].concat()).collect();
            print!("{}", table(&["#", "depth", "direction", "kind"], &numbered));
            println!("{} half cycles", records.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CostReport {
    model: StressModel,
    half_cycles: usize,
    /// Fractional life loss with every half cycle counted.
    life_loss: f64,
    /// Fractional life loss with each full cycle counted once.
    life_loss_full_cycles_once: f64,
    replacement_cost: f64,
    cost_dollars: f64,
}

pub fn cost(global: &GlobalArgs, profile: &Path) -> Result<ExitCode> {
    let ctx = setup(global)?;
    let p = load_profile(&ctx, profile)?;
    let model = ctx.config.stress_model()?;
    let cycles = count_cycles(&p);
    let life_loss = cost_of_cycles(&cycles, &model);
    let replacement = ctx.config.battery_params().replacement_cost();
    let report = CostReport {
        model,
        half_cycles: cycles.len(),
        life_loss,
        life_loss_full_cycles_once: cost_full_cycles_once(&cycles, &model),
        replacement_cost: replacement,
        cost_dollars: life_loss * replacement,
    };
    ctx.out.write_json("cost.json", &report)?;
    match ctx.format {
        Format::Json => print_json(&report)?,
        Format::Csv => print!(
            "{}",
            csv_string(
                &["half_cycles", "life_loss", "cost_dollars"],
                &[vec![report.half_cycles.to_string(), report.life_loss.to_string(), report.cost_dollars.to_string()]]
            )?
        ),
        Format::Text => {
            println!("half cycles:    {}", report.half_cycles);
            println!("life loss:      {:.6e}", report.life_loss);
            println!("cost:           ${:.2}", report.cost_dollars);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn soc_std(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Serialize)]
struct SocSummary {
    min: f64,
    max: f64,
    std: f64,
}

impl SocSummary {
    fn of(s: &[f64]) -> Self {
        Self {
            min: s.iter().copied().fold(f64::INFINITY, f64::min),
            max: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: soc_std(s),
        }
    }
}

#[derive(Serialize)]
struct SolverSummary {
    u_best: f64,
    revenue: f64,
    degradation_cost: f64,
    barrier_value: f64,
    iterations: usize,
    rejected_steps: usize,
    converged: bool,
    subgradient_bound: f64,
    gap_bound: f64,
    simultaneous_mwh: f64,
    trace_start: f64,
    trace_end: f64,
}

impl SolverSummary {
    fn of(s: &Solution) -> Self {
        Self {
            u_best: s.u_best,
            revenue: s.revenue,
            degradation_cost: s.degradation_cost,
            barrier_value: s.barrier_value,
            iterations: s.iterations,
            rejected_steps: s.rejected_steps,
            converged: s.converged,
            subgradient_bound: s.subgradient_bound,
            gap_bound: s.gap_bound,
            simultaneous_mwh: s.simultaneous_mwh,
            trace_start: s.u_trace[0],
            trace_end: *s.u_trace.last().unwrap(),
        }
    }
}

/// Annual economics at the top level, as in the economics report, plus the
/// raw-horizon figures and solver diagnostics.
#[derive(Serialize)]
struct OptimizeReport {
    #[serde(flatten)]
    annual: EconomicsReport,
    horizon: EconomicsReport,
    seed: u64,
    soc: SocSummary,
    solver: SolverSummary,
}

fn solve_problem(problem: &DispatchProblem, ctx: &Session, iters: Option<usize>) -> Result<Solution> {
    let mut cfg = ctx.config.solver.clone();
    if let Some(n) = iters {
        cfg.inner_iters = n;
    }
    solve(problem, &cfg).context("solving the dispatch problem")
}

pub fn optimize(global: &GlobalArgs, iters: Option<usize>) -> Result<ExitCode> {
    let ctx = setup(global)?;
    let problem = ctx.config.problem()?;
    let sol = solve_problem(&problem, &ctx, iters)?;
    let b = &problem.battery;
    let horizon = EconomicsReport::assess(
        &sol.charge,
        &sol.discharge,
        b,
        &problem.market,
        &problem.signal,
        Some(&problem.model),
        &problem.model,
    )?;
    let report = OptimizeReport {
        annual: annualize(&horizon)?,
        horizon,
        seed: ctx.config.seed,
        soc: SocSummary::of(&sol.soc),
        solver: SolverSummary::of(&sol),
    };
    ctx.out.write_with("solution.csv", |w| write_solution_csv(w, &sol.charge, &sol.discharge, &sol.soc, &problem.signal))?;
    ctx.out.write_json("report.json", &report)?;
    let k: Vec<f64> = (0..sol.u_trace.len()).map(|i| i as f64).collect();
    let best = sol.best_trace();
    ctx.out.write_with("convergence.csv", |w| write_columns_csv(w, &["iteration", "u", "u_best"], &[&k, &sol.u_trace, &best]))?;
    match ctx.format {
        Format::Json => print_json(&report)?,
        Format::Csv => {
            let mut buf = vec![];
            write_solution_csv(&mut buf, &sol.charge, &sol.discharge, &sol.soc, &problem.signal)?;
            print!("{}", String::from_utf8(buf)?);
        }
        Format::Text => {
            let h = &report.horizon;
            println!("horizon:                  {:.3} h ({} intervals)", h.horizon_hours, problem.horizon());
            println!("regulation payment:       ${:.2}", h.regulation_service_payment);
            println!("degradation (rainflow):   ${:.2}", h.actual_battery_degradation);
            println!("utility:                  ${:.2}", h.total_regulation_utility);
            println!("annual utility:           ${:.0}", report.annual.total_regulation_utility);
            if let Some(m) = report.annual.battery_life_expectancy_months {
                println!("life expectancy:          {m:.1} months");
            }
            println!("soc range:                [{:.3}, {:.3}], std {:.4}", report.soc.min, report.soc.max, report.soc.std);
            println!(
                "iterations:               {} ({}), gap bound {:.3e}",
                sol.iterations,
                if sol.converged { "converged" } else { "budget exhausted" },
                sol.gap_bound
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct BenchmarkColumn {
    policy: &'static str,
    annual: EconomicsReport,
    horizon: EconomicsReport,
    soc: SocSummary,
}

#[derive(Serialize)]
struct BenchmarkReport {
    seed: u64,
    intervals: usize,
    linear_k1: f64,
    columns: Vec<BenchmarkColumn>,
}

fn benchmark_text(report: &BenchmarkReport) -> String {
    let header: Vec<&str> = ["Annual economics"].into_iter().chain(report.columns.iter().map(|c| c.policy)).collect();
    let k = |f: fn(&EconomicsReport) -> f64| -> Vec<String> {
        report.columns.iter().map(|c| format!("{:.1}", f(&c.annual) / 1000.0)).collect()
    };
    let mut rows = vec![
        [vec!["Regulation service payment (k$)".to_string()], k(|e| e.regulation_service_payment)].concat(),
        [vec!["Modeled battery degradation (k$)".to_string()], k(|e| e.modeled_battery_degradation)].concat(),
        [vec!["Actual battery degradation (k$)".to_string()], k(|e| e.actual_battery_degradation)].concat(),
        [vec!["Total regulation utility (k$)".to_string()], k(|e| e.total_regulation_utility)].concat(),
    ];
    rows.push(
        [
            vec!["Battery life expectancy (month)".to_string()],
            report
                .columns
                .iter()
                .map(|c| c.annual.battery_life_expectancy_months.map_or("inf".to_string(), |m| format!("{m:.1}")))
                .collect(),
        ]
        .concat(),
    );
    rows.push(
        [vec!["SoC standard deviation".to_string()], report.columns.iter().map(|c| format!("{:.4}", c.soc.std)).collect()]
            .concat(),
    );
    table(&header, &rows)
}

pub fn benchmark(global: &GlobalArgs, iters: Option<usize>) -> Result<ExitCode> {
    let ctx = setup(global)?;
    let problem = ctx.config.problem()?;
    let reference = problem.model;
    let linear_model = StressModel::linear(ctx.config.benchmark.linear_k1)?;
    let linear_problem = DispatchProblem { model: linear_model, ..problem.clone() };
    let (rainflow, linear) = std::thread::scope(|s| {
        let a = s.spawn(|| solve_problem(&problem, &ctx, iters));
        let b = s.spawn(|| solve_problem(&linear_problem, &ctx, iters));
        (a.join().expect("solver thread panicked"), b.join().expect("solver thread panicked"))
    });
    let (rainflow, linear) = (rainflow?, linear?);
    let b = &problem.battery;
    let (fc, fd) = policy_follow(&problem.signal, b, problem.market.capacity_mw);

    let policies: [(&'static str, &[f64], &[f64], Option<&StressModel>); 3] = [
        ("rainflow", &rainflow.charge, &rainflow.discharge, Some(&reference)),
        ("no-cost", &fc, &fd, None),
        ("linear", &linear.charge, &linear.discharge, Some(&linear_model)),
    ];
    let mut columns = vec![];
    let mut socs = vec![];
    let mut nets = vec![];
    for (name, c, d, modeled) in policies {
        let horizon = EconomicsReport::assess(c, d, b, &problem.market, &problem.signal, modeled, &reference)?;
        let s = soc_trajectory(c, d, b);
        columns.push(BenchmarkColumn { policy: name, annual: annualize(&horizon)?, horizon, soc: SocSummary::of(&s) });
        socs.push(s);
        nets.push(d.iter().zip(c).map(|(d, c)| d - c).collect::<Vec<f64>>());
    }
    let report = BenchmarkReport {
        seed: ctx.config.seed,
        intervals: problem.horizon(),
        linear_k1: ctx.config.benchmark.linear_k1,
        columns,
    };
    let text = benchmark_text(&report);
    ctx.out.write_json("benchmark.json", &report)?;
    ctx.out.write_bytes("benchmark.txt", text.as_bytes())?;
    let t: Vec<f64> = (0..problem.horizon()).map(|i| i as f64).collect();
    let instructed: Vec<f64> = problem.signal.values().iter().map(|r| r * problem.market.capacity_mw).collect();
    ctx.out.write_with("power.csv", |w| {
        write_columns_csv(w, &["t", "instruction", "rainflow", "no_cost", "linear"], &[&t, &instructed, &nets[0], &nets[1], &nets[2]])
    })?;
    let ts: Vec<f64> = (0..=problem.horizon()).map(|i| i as f64).collect();
    ctx.out.write_with("soc.csv", |w| {
        write_columns_csv(w, &["t", "rainflow", "no_cost", "linear"], &[&ts, &socs[0], &socs[1], &socs[2]])
    })?;
    match ctx.format {
        Format::Json => print_json(&report)?,
        Format::Csv => {
            let rows: Vec<Vec<String>> = report
                .columns
                .iter()
                .map(|c| {
                    let a = &c.annual;
                    vec![
                        c.policy.to_string(),
                        a.regulation_service_payment.to_string(),
                        a.modeled_battery_degradation.to_string(),
                        a.actual_battery_degradation.to_string(),
                        a.total_regulation_utility.to_string(),
                        a.battery_life_expectancy_months.map_or(String::new(), |m| m.to_string()),
                        c.soc.std.to_string(),
                    ]
                })
                .collect();
            print!(
                "{}",
                csv_string(
                    &[
                        "policy",
                        "regulation_service_payment",
                        "modeled_battery_degradation",
                        "actual_battery_degradation",
                        "total_regulation_utility",
                        "battery_life_expectancy_months",
                        "soc_std"
                    ],
                    &rows
                )?
            );
        }
        Format::Text => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

/// `variant:c1,c2`, built without the convexity checks.
fn parse_model(spec: &str) -> Result<StressModel> {
    let (variant, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidParameter(format!("model '{spec}' is not of the form variant:c1,c2")))?;
    let coeffs: Vec<f64> = rest
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad coefficient '{c}' in '{spec}'"))))
        .collect::<std::result::Result<_, _>>()?;
    let want = |n: usize| {
        if coeffs.len() == n && coeffs.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("model '{spec}' needs {n} finite coefficient(s)")))
        }
    };
    Ok(match variant {
        "linear" => {
            want(1)?;
            StressModel::Linear { k1: coeffs[0] }
        }
        "exponential" => {
            want(2)?;
            StressModel::Exponential { k2: coeffs[0], k3: coeffs[1] }
        }
        "polynomial" => {
            want(2)?;
            StressModel::polynomial_unchecked(coeffs[0], coeffs[1])
        }
        other => return Err(Error::InvalidParameter(format!("unknown stress model variant '{other}'")).into()),
    })
}

pub fn verify(global: &GlobalArgs, suite: &str, samples: usize, models: &[String]) -> Result<ExitCode> {
    let suite: Suite = suite.parse()?;
    let ctx = setup(global)?;
    let models = if models.is_empty() {
        suite_models()
    } else {
        models.iter().map(|m| parse_model(m)).collect::<Result<Vec<_>>>()?
    };
    let reports: Vec<PropertyReport> = run_suite_with(suite, ctx.config.seed, samples, &models)?;
    ctx.out.write_json("verify.json", &reports)?;
    let failed = reports.iter().filter(|r| !r.passed()).count();
    match ctx.format {
        Format::Json => print_json(&reports)?,
        Format::Csv | Format::Text => {
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        r.property.clone(),
                        r.model.clone().unwrap_or_default(),
                        r.samples.to_string(),
                        r.skipped.to_string(),
                        r.violations.to_string(),
                        format!("{:.3e}", r.worst_violation),
                        format!("{:.3e}", r.max_excess),
                    ]
                })
                .collect();
            let header = ["property", "model", "samples", "skipped", "violations", "worst_violation", "max_excess"];
            if ctx.format == Format::Csv {
                let quoted: Vec<Vec<String>> = rows
                    .into_iter()
                    .map(|r| r.into_iter().map(|c| if c.contains(',') { format!("\"{c}\"") } else { c }).collect())
                    .collect();
                print!("{}", csv_string(&header, &quoted)?);
            } else {
                print!("{}", table(&header, &rows));
                if failed == 0 {
                    println!("all {} properties hold", reports.len());
                } else {
                    println!("{failed} of {} properties violated", reports.len());
                }
            }
        }
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
