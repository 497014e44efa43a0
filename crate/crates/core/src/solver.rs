//! Degradation-aware dispatch: log-barrier reformulation of the constrained
//! problem and constant-step subgradient descent with best-point tracking.
//!
//! Decision variables are the charging and discharging powers `c`, `d` over
//! `T` intervals. The SoC trajectory has `T + 1` samples with `s[0] = s⁰`; the
//! SoC barrier covers samples `1..=T`, the ones the decisions move.

use serde::{Deserialize, Serialize};

use crate::degradation::{cost_and_soc_gradient, BatteryParams, StressModel};
use crate::error::{Error, Result};
use crate::market::{revenue, revenue_gradient, MarketParams, RegulationSignal};
use crate::rainflow::CycleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchProblem {
    pub battery: BatteryParams,
    pub model: StressModel,
    pub market: MarketParams,
    pub signal: RegulationSignal,
}

impl DispatchProblem {
    pub fn horizon(&self) -> usize {
        self.signal.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.battery.validate().map_err(|e| Error::Infeasible(e.to_string()))?;
        self.market.validate()?;
        self.model.validated()?;
        if self.signal.is_empty() {
            return Err(Error::InvalidParameter("empty regulation signal".into()));
        }
        Ok(())
    }
}

/// How the degradation part of the subgradient is assembled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubgradientRule {
    /// Gradient of the rainflow cost through the turning points that fix each
    /// cycle depth. Exact wherever the cycle structure is locally stable.
    #[default]
    Exact,
    /// `Φ'` of the cycle owning each interval (mean over owners on junction
    /// intervals), applied only to the power that moves SoC in the cycle's
    /// direction.
    CycleOwner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub barrier_lambda0: f64,
    pub barrier_growth: f64,
    pub barrier_stages: usize,
    pub inner_iters: usize,
    pub interior_margin: f64,
    /// Kept for reproducible reruns; the current iteration is deterministic.
    pub seed: u64,
    pub max_backtracks: u32,
    pub stall_window: usize,
    pub stall_tolerance: f64,
    pub rule: SubgradientRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            barrier_lambda0: 10.0,
            barrier_growth: 10.0,
            barrier_stages: 5,
            inner_iters: 2000,
            interior_margin: 1e-6,
            seed: 0,
            max_backtracks: 30,
            stall_window: 200,
            stall_tolerance: 1e-9,
            rule: SubgradientRule::Exact,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, params: &BatteryParams) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.barrier_lambda0 > 0.0) {
            return bad(format!("barrier_lambda0 must be positive, got {}", self.barrier_lambda0));
        }
        if !(self.barrier_growth > 1.0) {
            return bad(format!("barrier_growth must exceed 1, got {}", self.barrier_growth));
        }
        if !(self.interior_margin > 0.0 && self.interior_margin < params.power_mw / 2.0) {
            return bad(format!("interior_margin must lie in (0, P_max/2), got {}", self.interior_margin));
        }
        Ok(())
    }

    pub fn final_barrier_lambda(&self) -> f64 {
        self.barrier_lambda0 * self.barrier_growth.powi(self.barrier_stages.saturating_sub(1) as i32)
    }
}

/// `s[0] = s⁰`, `s[t+1] = s[t] + (c[t]·η_c − d[t]/η_d)·t_s/E`.
pub fn soc_trajectory(charge: &[f64], discharge: &[f64], params: &BatteryParams) -> Vec<f64> {
    let gain = params.charge_gain();
    let loss = params.discharge_loss();
    let mut s = Vec::with_capacity(charge.len() + 1);
    let mut cur = params.soc0;
    s.push(cur);
    for (c, d) in charge.iter().zip(discharge) {
        cur += c * gain - d * loss;
        s.push(cur);
    }
    s
}

/// Smallest of the six barrier arguments at `(c, d)` with trajectory `s`.
pub fn interior_slack(charge: &[f64], discharge: &[f64], s: &[f64], params: &BatteryParams) -> f64 {
    let p = params.power_mw;
    let powers = charge
        .iter()
        .chain(discharge)
        .fold(f64::INFINITY, |m, &x| m.min(x).min(p - x));
    s[1..]
        .iter()
        .fold(powers, |m, &v| m.min(v - params.soc_min).min(params.soc_max - v))
}

fn check_lengths(charge: &[f64], discharge: &[f64], problem: &DispatchProblem) -> Result<()> {
    let t = problem.horizon();
    for v in [charge, discharge] {
        if v.len() != t {
            return Err(Error::LengthMismatch { expected: t, got: v.len() });
        }
    }
    Ok(())
}

/// `Σ log` of the six barrier families. Errors when any argument is not positive.
fn barrier_sum(charge: &[f64], discharge: &[f64], s: &[f64], params: &BatteryParams) -> Result<f64> {
    let slack = interior_slack(charge, discharge, s, params);
    if !(slack > 0.0) {
        return Err(Error::NotInterior(format!("smallest barrier argument is {slack}")));
    }
    let p = params.power_mw;
    let mut sum = 0.0;
    for &v in &s[1..] {
        sum += (params.soc_max - v).ln() + (v - params.soc_min).ln();
    }
    for &x in charge.iter().chain(discharge) {
        sum += (p - x).ln() + x.ln();
    }
    Ok(sum)
}

/// Objective pieces at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub revenue: f64,
    pub degradation_cost: f64,
}

impl ObjectiveTerms {
    /// `−R + λʳ·Σ Φ`, the quantity being minimized before the barrier is added.
    pub fn value(&self) -> f64 {
        self.degradation_cost - self.revenue
    }
}

pub fn objective_terms(charge: &[f64], discharge: &[f64], problem: &DispatchProblem) -> Result<ObjectiveTerms> {
    check_lengths(charge, discharge, problem)?;
    let s = soc_trajectory(charge, discharge, &problem.battery);
    Ok(terms_with_soc(charge, discharge, &s, problem))
}

fn terms_with_soc(charge: &[f64], discharge: &[f64], s: &[f64], problem: &DispatchProblem) -> ObjectiveTerms {
    let b = &problem.battery;
    let revenue = revenue(charge, discharge, &problem.market, &problem.signal, b.interval_hours)
        .expect("lengths checked by caller");
    let degradation_cost = b.replacement_cost() * crate::degradation::cycle_cost_raw(s, &problem.model);
    ObjectiveTerms { revenue, degradation_cost }
}

/// `−R + λʳ·ΣΦ − (1/λ)·Σ log(...)` over the six barrier families.
pub fn barrier_objective(
    charge: &[f64],
    discharge: &[f64],
    problem: &DispatchProblem,
    barrier_lambda: f64,
) -> Result<f64> {
    check_lengths(charge, discharge, problem)?;
    let s = soc_trajectory(charge, discharge, &problem.battery);
    let logs = barrier_sum(charge, discharge, &s, &problem.battery)?;
    Ok(terms_with_soc(charge, discharge, &s, problem).value() - logs / barrier_lambda)
}

/// Degradation gradient with respect to `(c, d)` in life-loss units (not yet
/// multiplied by `λʳ`).
fn degradation_gradient(
    s: &[f64],
    model: &StressModel,
    params: &BatteryParams,
    rule: SubgradientRule,
) -> (Vec<f64>, Vec<f64>, CycleSet) {
    let t = s.len() - 1;
    let gain = params.charge_gain();
    let loss = params.discharge_loss();
    let (_, gs, cycles) = cost_and_soc_gradient(s, model);
    let mut gc = vec![0.0; t];
    let mut gd = vec![0.0; t];
    match rule {
        SubgradientRule::Exact => {
            // raising c[t] lifts every sample after t
            let mut suffix = 0.0;
            for i in (0..t).rev() {
                suffix += gs[i + 1];
                gc[i] = gain * suffix;
                gd[i] = -loss * suffix;
            }
        }
        SubgradientRule::CycleOwner => {
            let mut sum = vec![0.0; t];
            let mut count = vec![0u32; t];
            for h in &cycles.half_cycles {
                let slope = model.phi_prime(h.depth);
                for sh in &h.shares {
                    sum[sh.interval] += slope;
                    count[sh.interval] += 1;
                }
            }
            for i in 0..t {
                if count[i] == 0 {
                    continue;
                }
                let mean = sum[i] / count[i] as f64;
                if s[i + 1] > s[i] {
                    gc[i] = gain * mean;
                } else {
                    gd[i] = loss * mean;
                }
            }
        }
    }
    (gc, gd, cycles)
}

/// Subgradient `(∂U/∂c, ∂U/∂d)` of the barrier objective.
pub fn subgradient(
    charge: &[f64],
    discharge: &[f64],
    problem: &DispatchProblem,
    barrier_lambda: f64,
    rule: SubgradientRule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(charge, discharge, problem)?;
    let b = &problem.battery;
    let s = soc_trajectory(charge, discharge, b);
    let slack = interior_slack(charge, discharge, &s, b);
    if !(slack > 0.0) {
        return Err(Error::NotInterior(format!("smallest barrier argument is {slack}")));
    }
    let t = problem.horizon();
    let (rc, rd) = revenue_gradient(charge, discharge, &problem.market, &problem.signal, b.interval_hours);
    let (dc, dd, _) = degradation_gradient(&s, &problem.model, b, rule);
    let lr = b.replacement_cost();
    let inv = 1.0 / barrier_lambda;
    let gain = b.charge_gain();
    let loss = b.discharge_loss();
    let p = b.power_mw;

    let mut gc = vec![0.0; t];
    let mut gd = vec![0.0; t];
    // Σ_{τ>t} [1/(s_τ − s_max) + 1/(s_τ − s_min)]
    let mut soc_suffix = 0.0;
    for i in (0..t).rev() {
        let v = s[i + 1];
        soc_suffix += 1.0 / (v - b.soc_max) + 1.0 / (v - b.soc_min);
        let (c, d) = (charge[i], discharge[i]);
        gc[i] = -rc[i] + lr * dc[i] - inv * (soc_suffix * gain + 1.0 / (c - p) + 1.0 / c);
        gd[i] = -rd[i] + lr * dd[i] - inv * (-soc_suffix * loss + 1.0 / (d - p) + 1.0 / d);
    }
    Ok((gc, gd))
}

/// Iterate of the subgradient method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchState {
    pub charge: Vec<f64>,
    pub discharge: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: DispatchState,
    pub accepted: bool,
    /// Number of times the step length was halved.
    pub halvings: u32,
    /// Step length actually used (0 when rejected).
    pub alpha_used: f64,
}

/// One subgradient step at barrier weight `barrier_lambda`.
pub fn step(
    state: &DispatchState,
    alpha: f64,
    problem: &DispatchProblem,
    barrier_lambda: f64,
    config: &SolverConfig,
) -> Result<StepOutcome> {
    let (gc, gd) = subgradient(&state.charge, &state.discharge, problem, barrier_lambda, config.rule)?;
    Ok(step_along(state, (&gc, &gd), alpha, problem, config))
}

/// Moves `x ← x − α·g`, halving `α` until every barrier argument of the
/// candidate exceeds `interior_margin`. After `max_backtracks` halvings the
/// step is rejected and the state returned unchanged.
pub fn step_along(
    state: &DispatchState,
    grad: (&[f64], &[f64]),
    alpha: f64,
    problem: &DispatchProblem,
    config: &SolverConfig,
) -> StepOutcome {
    let (gc, gd) = grad;
    if gc.iter().chain(gd).all(|&g| g == 0.0) {
        return StepOutcome { state: state.clone(), accepted: true, halvings: 0, alpha_used: alpha };
    }
    let mut a = alpha;
    let mut halvings = 0;
    loop {
        let charge: Vec<f64> = state.charge.iter().zip(gc).map(|(x, g)| x - a * g).collect();
        let discharge: Vec<f64> = state.discharge.iter().zip(gd).map(|(x, g)| x - a * g).collect();
        let s = soc_trajectory(&charge, &discharge, &problem.battery);
        if interior_slack(&charge, &discharge, &s, &problem.battery) > config.interior_margin {
            return StepOutcome { state: DispatchState { charge, discharge }, accepted: true, halvings, alpha_used: a };
        }
        if halvings >= config.max_backtracks {
            return StepOutcome { state: state.clone(), accepted: false, halvings, alpha_used: 0.0 };
        }
        a *= 0.5;
        halvings += 1;
    }
}

/// Asymptotic suboptimality of constant-step subgradient descent, `G²α/2`.
pub fn convergence_gap(subgradient_bound: f64, alpha: f64) -> f64 {
    subgradient_bound * subgradient_bound * alpha / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub charge: Vec<f64>,
    pub discharge: Vec<f64>,
    pub soc: Vec<f64>,
    /// Best `−R + λʳ·ΣΦ` among visited strictly feasible iterates.
    pub u_best: f64,
    /// `−R + λʳ·ΣΦ` of the iterate after every iteration, starting with the
    /// initial point.
    pub u_trace: Vec<f64>,
    pub revenue: f64,
    pub degradation_cost: f64,
    /// `−(1/λ)·Σ log(...)` at the returned point for the final barrier weight.
    pub barrier_value: f64,
    pub iterations: usize,
    pub rejected_steps: usize,
    pub converged: bool,
    /// Largest subgradient 2-norm seen during the run.
    pub subgradient_bound: f64,
    pub gap_bound: f64,
    /// Energy charged and discharged in the same interval, MWh.
    pub simultaneous_mwh: f64,
}

impl Solution {
    pub fn utility(&self) -> f64 {
        -self.u_best
    }

    /// Running minimum of the objective trace.
    pub fn best_trace(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.u_trace
            .iter()
            .map(|&u| {
                best = best.min(u);
                best
            })
            .collect()
    }
}

/// Initial point: `c = d = P/2`, replaced by an SoC-preserving pair
/// `d = c·η_c·η_d` when the first choice leaves the interior.
pub fn initial_state(problem: &DispatchProblem, margin: f64) -> DispatchState {
    let b = &problem.battery;
    let t = problem.horizon();
    let half = b.power_mw / 2.0;
    let charge = vec![half; t];
    let discharge = vec![half; t];
    let s = soc_trajectory(&charge, &discharge, b);
    if interior_slack(&charge, &discharge, &s, b) > margin {
        return DispatchState { charge, discharge };
    }
    let discharge = vec![half * b.eta_c * b.eta_d; t];
    DispatchState { charge, discharge }
}

pub fn solve(problem: &DispatchProblem, config: &SolverConfig) -> Result<Solution> {
    problem.validate()?;
    config.validate(&problem.battery)?;
    let b = &problem.battery;
    let mut state = initial_state(problem, config.interior_margin);
    let s0 = soc_trajectory(&state.charge, &state.discharge, b);
    if !(interior_slack(&state.charge, &state.discharge, &s0, b) > config.interior_margin) {
        return Err(Error::Infeasible("no strictly interior starting point".into()));
    }

    let mut current = terms_with_soc(&state.charge, &state.discharge, &s0, problem);
    let mut trace = vec![current.value()];
    let mut best_state = state.clone();
    let mut best_terms = current;
    let mut g_bound: f64 = 0.0;
    let mut iterations = 0;
    let mut rejected = 0;
    let mut converged = false;

    let mut lambda = config.barrier_lambda0;
    for stage in 0..config.barrier_stages {
        if stage > 0 {
            lambda *= config.barrier_growth;
        }
        let mut stage_history: Vec<f64> = Vec::with_capacity(config.inner_iters + 1);
        let mut stage_best = barrier_objective(&state.charge, &state.discharge, problem, lambda)?;
        stage_history.push(stage_best);
        converged = false;
        for k in 0..config.inner_iters {
            let (gc, gd) = subgradient(&state.charge, &state.discharge, problem, lambda, config.rule)?;
            let norm = gc.iter().chain(&gd).map(|g| g * g).sum::<f64>().sqrt();
            g_bound = g_bound.max(norm);
            let out = step_along(&state, (&gc, &gd), config.alpha, problem, config);
            iterations += 1;
            if out.accepted {
                state = out.state;
                let s = soc_trajectory(&state.charge, &state.discharge, b);
                current = terms_with_soc(&state.charge, &state.discharge, &s, problem);
                let logs = barrier_sum(&state.charge, &state.discharge, &s, b)?;
                stage_best = stage_best.min(current.value() - logs / lambda);
                if current.value() < best_terms.value() {
                    best_terms = current;
                    best_state = state.clone();
                }
            } else {
                rejected += 1;
            }
            trace.push(current.value());
            stage_history.push(stage_best);

            if k + 1 >= config.stall_window {
                let then = stage_history[k + 1 - config.stall_window];
                if then - stage_best <= config.stall_tolerance * then.abs().max(1e-12) {
                    converged = true;
                    break;
                }
            }
        }
    }

    let soc = soc_trajectory(&best_state.charge, &best_state.discharge, b);
    let barrier_value = -barrier_sum(&best_state.charge, &best_state.discharge, &soc, b)? / config.final_barrier_lambda();
    let simultaneous_mwh = best_state
        .charge
        .iter()
        .zip(&best_state.discharge)
        .map(|(c, d)| c.min(*d) * b.interval_hours)
        .sum();
    Ok(Solution {
        u_best: best_terms.value(),
        revenue: best_terms.revenue,
        degradation_cost: best_terms.degradation_cost,
        charge: best_state.charge,
        discharge: best_state.discharge,
        soc,
        u_trace: trace,
        barrier_value,
        iterations,
        rejected_steps: rejected,
        converged,
        subgradient_bound: g_bound,
        gap_bound: convergence_gap(g_bound, config.alpha),
        simultaneous_mwh,
    })
}
