use cyclecost_core::market::{policy_follow, revenue, EconomicsReport, MarketParams, RegulationSignal};
use cyclecost_core::oracle::{finite_difference_subgradient, gradient_relative_error, GRADIENT_TOLERANCE};
use cyclecost_core::rainflow::count_cycles_raw;
use cyclecost_core::solver::{
    objective_terms, soc_trajectory, solve, subgradient, DispatchProblem, SolverConfig, SubgradientRule,
};
use cyclecost_core::{BatteryParams, StressModel};
use proptest::prelude::*;

fn problem(signal: Vec<f64>, interval_hours: f64) -> DispatchProblem {
    let mut battery = BatteryParams::regulation_default();
    battery.interval_hours = interval_hours;
    DispatchProblem {
        battery,
        model: StressModel::reference(),
        market: MarketParams::regulation_default(),
        signal: RegulationSignal::new(signal).unwrap(),
    }
}

proptest! {
    #[test]
    fn revenue_is_concave(
        sig in prop::collection::vec(-1.0..=1.0f64, 1..20),
        a in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 20),
        b in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 20),
        lambda in 0.0..=1.0f64,
    ) {
        let t = sig.len();
        let sig = RegulationSignal::new(sig).unwrap();
        let m = MarketParams::regulation_default();
        let split = |v: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { v[..t].iter().copied().unzip() };
        let (c1, d1) = split(&a);
        let (c2, d2) = split(&b);
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect() };
        let r1 = revenue(&c1, &d1, &m, &sig, 0.1).unwrap();
        let r2 = revenue(&c2, &d2, &m, &sig, 0.1).unwrap();
        let rm = revenue(&mix(&c1, &c2), &mix(&d1, &d2), &m, &sig, 0.1).unwrap();
        prop_assert!(rm >= lambda * r1 + (1.0 - lambda) * r2 - 1e-9);
    }

    #[test]
    fn follow_policy_stays_feasible(sig in prop::collection::vec(-1.0..=1.0f64, 1..200)) {
        let p = problem(sig, 0.05);
        let (c, d) = policy_follow(&p.signal, &p.battery, p.market.capacity_mw);
        let s = soc_trajectory(&c, &d, &p.battery);
        prop_assert!(s.iter().all(|&v| v >= p.battery.soc_min - 1e-12 && v <= p.battery.soc_max + 1e-12));
        prop_assert!(c.iter().zip(&d).all(|(c, d)| *c == 0.0 || *d == 0.0));
    }
}

/// Minimum of the true objective over a dense grid of net powers for T = 2.
fn dense_grid_optimum(p: &DispatchProblem, levels: usize) -> f64 {
    let pm = p.battery.power_mw;
    let grid: Vec<f64> = (0..levels).map(|k| -pm + 2.0 * pm * k as f64 / (levels - 1) as f64).collect();
    let mut best = f64::INFINITY;
    for &a in &grid {
        for &b in &grid {
            let c = vec![(-a).max(0.0), (-b).max(0.0)];
            let d = vec![a.max(0.0), b.max(0.0)];
            let s = soc_trajectory(&c, &d, &p.battery);
            if s.iter().all(|&v| (p.battery.soc_min..=p.battery.soc_max).contains(&v)) {
                best = best.min(objective_terms(&c, &d, p).unwrap().value());
            }
        }
    }
    best
}

#[test]
fn two_step_solutions_match_a_dense_grid() {
    let config = SolverConfig { alpha: 1e-4, inner_iters: 4000, ..SolverConfig::default() };
    for signal in [[0.8, -0.6], [1.0, 1.0], [-0.3, 0.9], [0.1, -0.1], [-1.0, -0.2]] {
        let p = problem(signal.to_vec(), 0.05);
        let sol = solve(&p, &config).unwrap();
        let grid = dense_grid_optimum(&p, 401);
        assert!(
            sol.u_best - grid <= sol.gap_bound + 1e-3,
            "signal {signal:?}: solver {} grid {} bound {}",
            sol.u_best,
            grid,
            sol.gap_bound
        );
    }
}

/// Powers that trace `soc` with a little simultaneous charge and discharge,
/// keeping every power strictly inside `(0, P)`.
fn powers_for(soc: &[f64], b: &BatteryParams) -> (Vec<f64>, Vec<f64>) {
    let base = 0.05 * b.power_mw;
    let mut c = vec![];
    let mut d = vec![];
    for w in soc.windows(2) {
        let step = w[1] - w[0];
        if step >= 0.0 {
            d.push(base);
            c.push((step + base * b.discharge_loss()) / b.charge_gain());
        } else {
            c.push(base);
            d.push((-step + base * b.charge_gain()) / b.discharge_loss());
        }
    }
    (c, d)
}

#[test]
fn exact_rule_matches_finite_differences_across_a_junction() {
    let shape = [0.2, 0.5, 0.1, 0.9, 0.3, 0.6, 0.0, 0.8, 0.2];
    let soc: Vec<f64> = shape.iter().map(|v| 0.5 + 0.2 * (v - 0.2)).collect();
    assert!(!count_cycles_raw(&soc).half_cycles.iter().all(|h| h.junction_intervals.is_empty()));
    let p = problem(vec![0.3, -0.5, 0.7, -0.2, 0.4, -0.9, 0.6, -0.1], 0.05);
    let (c, d) = powers_for(&soc, &p.battery);
    assert!(c.iter().chain(&d).all(|&v| v > 0.0 && v < p.battery.power_mw), "{c:?} {d:?}");
    let traced = soc_trajectory(&c, &d, &p.battery);
    for (a, b) in traced.iter().zip(&soc) {
        assert!((a - b).abs() < 1e-12);
    }

    let lambda = 1e4;
    let numeric = finite_difference_subgradient(&c, &d, &p, lambda, 1e-7).unwrap();
    assert!(numeric.kinks.is_empty(), "{:?}", numeric.kinks);
    let exact = subgradient(&c, &d, &p, lambda, SubgradientRule::Exact).unwrap();
    let owner = subgradient(&c, &d, &p, lambda, SubgradientRule::CycleOwner).unwrap();
    let exact_err = gradient_relative_error((&exact.0, &exact.1), &numeric);
    let owner_err = gradient_relative_error((&owner.0, &owner.1), &numeric);
    assert!(exact_err < GRADIENT_TOLERANCE, "exact rule error {exact_err}");
    assert!(owner_err > 10.0 * GRADIENT_TOLERANCE, "owner rule error {owner_err}");
}

#[test]
fn rainflow_dispatch_beats_following_the_signal() {
    let signal: Vec<f64> = (0..120).map(|t| (t as f64 * 0.37).sin() * 0.9).collect();
    let mut p = problem(signal, 4.0 / 3600.0);
    p.battery = BatteryParams::regulation_default();
    // the default budget is sized for half-hour horizons
    let config = SolverConfig { inner_iters: 10_000, ..SolverConfig::default() };
    let sol = solve(&p, &config).unwrap();
    let (fc, fd) = policy_follow(&p.signal, &p.battery, p.market.capacity_mw);
    let assess = |c: &[f64], d: &[f64]| {
        EconomicsReport::assess(c, d, &p.battery, &p.market, &p.signal, Some(&p.model), &p.model).unwrap()
    };
    let ours = assess(&sol.charge, &sol.discharge);
    let follow = assess(&fc, &fd);
    assert!(ours.total_regulation_utility >= follow.total_regulation_utility - 1e-6);
    assert!((ours.total_regulation_utility - sol.utility()).abs() < 1e-6 * sol.utility().abs().max(1.0));
}
