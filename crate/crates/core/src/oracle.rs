//! Independent checks for the cost functional and the solver.
//!
//! The single-case `check_*` functions compare one quantity with the bound it
//! must respect and return a [`Check`]. The suite runners draw seeded random
//! cases, run a check on each and aggregate the outcome into a
//! [`PropertyReport`]. Every recorded violation carries the inputs needed to
//! replay it without the seed.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degradation::{cycle_cost_raw, BatteryParams, StressModel};
use crate::error::{Error, Result};
use crate::market::{MarketParams, RegulationSignal};
use crate::rainflow::{count_cycles_raw, SocProfile};
use crate::solver::{
    barrier_objective, interior_slack, objective_terms, soc_trajectory, solve, subgradient, DispatchProblem,
    SolverConfig, SubgradientRule,
};

/// Absolute slack allowed on the convexity inequality.
pub const CONVEXITY_TOLERANCE: f64 = 1e-8;
/// Absolute slack allowed on the merge, perturbation and stress-function checks.
pub const PROPERTY_TOLERANCE: f64 = 1e-10;
/// Relative (max-norm) error allowed between analytic and numeric gradients.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Extra absolute slack on top of `G²α/2` in the solver gap check.
pub const SOLVER_GAP_SLACK: f64 = 1e-3;

/// Largest horizon and grid resolution accepted by [`brute_force_optimum`].
pub const GRID_MAX_HORIZON: usize = 8;
pub const GRID_MAX_LEVELS: usize = 7;

/// A profile written as its first sample plus one signed jump per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecomposition {
    pub start: f64,
    pub amplitudes: Vec<f64>,
}

impl StepDecomposition {
    /// Partial sums `s(t) = s(0) + Σ_{i<t} P_i`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.amplitudes.len() + 1);
        let mut cur = self.start;
        s.push(cur);
        for p in &self.amplitudes {
            cur += p;
            s.push(cur);
        }
        s
    }
}

pub fn decompose_steps(profile: &SocProfile) -> StepDecomposition {
    decompose_steps_raw(profile.values())
}

/// # Panics
/// If `s` is empty.
pub fn decompose_steps_raw(s: &[f64]) -> StepDecomposition {
    StepDecomposition { start: s[0], amplitudes: s.windows(2).map(|w| w[1] - w[0]).collect() }
}

/// One evaluated inequality `value ≤ bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub value: f64,
    pub bound: f64,
}

impl Check {
    /// Positive when the inequality fails.
    pub fn excess(&self) -> f64 {
        self.value - self.bound
    }

    pub fn holds(&self, tolerance: f64) -> bool {
        self.excess() <= tolerance
    }
}

/// `f(λs₁ + (1−λ)s₂) ≤ λf(s₁) + (1−λ)f(s₂)`.
pub fn check_convexity(s1: &[f64], s2: &[f64], lambda: f64, model: &StressModel) -> Result<Check> {
    if s1.len() != s2.len() {
        return Err(Error::LengthMismatch { expected: s1.len(), got: s2.len() });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let mix: Vec<f64> = s1.iter().zip(s2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
    Ok(Check {
        value: cycle_cost_raw(&mix, model),
        bound: lambda * cycle_cost_raw(s1, model) + (1.0 - lambda) * cycle_cost_raw(s2, model),
    })
}

/// Profile whose jumps `i` and `i + 1` are combined into jump `i`. The length
/// is unchanged; the emptied interval becomes flat.
pub fn merge_adjacent_steps(s: &[f64], i: usize) -> Result<Vec<f64>> {
    if i + 2 >= s.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot merge steps {i} and {} of a {}-step profile",
            i + 1,
            s.len().saturating_sub(1)
        )));
    }
    let mut out = s.to_vec();
    out[i + 1] = s[i + 2];
    Ok(out)
}

/// `f(merged) ≤ f(original)`.
pub fn check_adjacent_merge(s: &[f64], i: usize, model: &StressModel) -> Result<Check> {
    let merged = merge_adjacent_steps(s, i)?;
    Ok(Check { value: cycle_cost_raw(&merged, model), bound: cycle_cost_raw(s, model) })
}

/// Half-cycle depths sorted in decreasing order.
pub fn sorted_depths(s: &[f64]) -> Vec<f64> {
    let mut d = count_cycles_raw(s).depths();
    d.sort_by(|a, b| b.total_cmp(a));
    d
}

/// Depth changes caused by adding `amplitude` to every sample from `i` on.
/// Both depth lists are sorted in decreasing order and the shorter one is
/// padded with zeros.
pub fn depth_changes(s: &[f64], i: usize, amplitude: f64) -> Result<Vec<f64>> {
    if i >= s.len() {
        return Err(Error::InvalidParameter(format!("step index {i} outside a {}-sample profile", s.len())));
    }
    let shifted: Vec<f64> = s.iter().enumerate().map(|(t, v)| if t >= i { v + amplitude } else { *v }).collect();
    let before = sorted_depths(s);
    let after = sorted_depths(&shifted);
    let n = before.len().max(after.len());
    Ok((0..n)
        .map(|k| after.get(k).copied().unwrap_or(0.0) - before.get(k).copied().unwrap_or(0.0))
        .collect())
}

/// `|Σ Δd| ≤ |P|` and `max |Δd| ≤ |P|`, reported as the larger of the two
/// left-hand sides against `|P|`.
pub fn check_perturbation_bounds(s: &[f64], i: usize, amplitude: f64) -> Result<Check> {
    let delta = depth_changes(s, i, amplitude)?;
    let sum = delta.iter().sum::<f64>().abs();
    let largest = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(Check { value: sum.max(largest), bound: amplitude.abs() })
}

/// `g(x₁ + x₂) ≥ g(x₁) + g(x₂)` for positive `x₁`, `x₂`.
pub fn check_superadditivity(x1: f64, x2: f64, model: &StressModel) -> Check {
    Check { value: model.phi(x1) + model.phi(x2), bound: model.phi(x1 + x2) }
}

/// `g(x₁ − x₂) ≤ g(x₁) − g(x₂)` for `x₁ ≥ x₂ > 0`.
pub fn check_difference_bound(x1: f64, x2: f64, model: &StressModel) -> Check {
    Check { value: model.phi(x1 - x2), bound: model.phi(x1) - model.phi(x2) }
}

/// `g(Σx) ≥ Σ_{x≥0} g(x) − Σ_{x<0} g(|x|)` for `Σx = D > 0` and `|x| ≤ D`.
pub fn check_signed_aggregation(xs: &[f64], model: &StressModel) -> Result<Check> {
    let total: f64 = xs.iter().sum();
    if !(total > 0.0) || xs.iter().any(|x| x.abs() > total) {
        return Err(Error::InvalidParameter(format!(
            "need a positive sum bounding every term, got {xs:?}"
        )));
    }
    let rhs: f64 = xs.iter().map(|&x| if x >= 0.0 { model.phi(x) } else { -model.phi(-x) }).sum();
    Ok(Check { value: rhs, bound: model.phi(total) })
}

/// Numeric partial derivatives of one coordinate family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericGradient {
    pub charge: Vec<f64>,
    pub discharge: Vec<f64>,
    /// Coordinates whose one-sided differences disagree, i.e. where the
    /// objective has a kink.
    pub kinks: Vec<Coordinate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Charge,
    Discharge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coordinate {
    pub family: Family,
    pub index: usize,
}

/// Relative disagreement between forward and backward differences above which
/// a coordinate is reported as a kink.
const KINK_TOLERANCE: f64 = 1e-5;

/// Centered differences of [`barrier_objective`]. `h` is halved (up to 40
/// times) for any coordinate whose probes leave the barrier's domain.
/// Coordinates whose forward and backward differences disagree at both `h`
/// and `h/100` are listed as kinks.
pub fn finite_difference_subgradient(
    charge: &[f64],
    discharge: &[f64],
    problem: &DispatchProblem,
    barrier_lambda: f64,
    h: f64,
) -> Result<NumericGradient> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("difference step must be positive, got {h}")));
    }
    let f0 = barrier_objective(charge, discharge, problem, barrier_lambda)?;
    let mut out = NumericGradient { charge: vec![0.0; charge.len()], discharge: vec![0.0; discharge.len()], kinks: vec![] };
    for family in [Family::Charge, Family::Discharge] {
        for index in 0..charge.len() {
            let eval = |delta: f64| {
                let mut c = charge.to_vec();
                let mut d = discharge.to_vec();
                match family {
                    Family::Charge => c[index] += delta,
                    Family::Discharge => d[index] += delta,
                }
                barrier_objective(&c, &d, problem, barrier_lambda)
            };
            let mut step = h;
            let mut probes = None;
            for _ in 0..40 {
                if let (Ok(up), Ok(down)) = (eval(step), eval(-step)) {
                    probes = Some((up, down));
                    break;
                }
                step *= 0.5;
            }
            let (up, down) = probes.ok_or_else(|| {
                Error::NotInterior(format!("no admissible difference step for {family:?} {index}"))
            })?;
            let centered = (up - down) / (2.0 * step);
            // one-sided slopes differ by O(h) on smooth stretches but keep
            // their gap as h shrinks across a kink
            let spread = ((up - f0) - (f0 - down)).abs() / step;
            if spread > KINK_TOLERANCE * centered.abs().max(1.0) {
                let small = step / 100.0;
                if let (Ok(u2), Ok(d2)) = (eval(small), eval(-small)) {
                    let spread_small = ((u2 - f0) - (f0 - d2)).abs() / small;
                    if spread_small > 0.1 * spread {
                        out.kinks.push(Coordinate { family, index });
                    }
                }
            }
            match family {
                Family::Charge => out.charge[index] = centered,
                Family::Discharge => out.discharge[index] = centered,
            }
        }
    }
    Ok(out)
}

/// Max-norm relative error `‖a − n‖∞ / ‖n‖∞` of an analytic gradient `a`
/// against a numeric one `n`.
pub fn gradient_relative_error(analytic: (&[f64], &[f64]), numeric: &NumericGradient) -> f64 {
    let num = numeric.charge.iter().chain(&numeric.discharge);
    let scale = num.clone().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = analytic
        .0
        .iter()
        .chain(analytic.1)
        .zip(num)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// Exhaustive search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    /// `−R + λʳ·ΣΦ` at the best grid point.
    pub objective: f64,
    pub charge: Vec<f64>,
    pub discharge: Vec<f64>,
    pub evaluations: u64,
    pub feasible_points: u64,
}

impl GridOptimum {
    pub fn utility(&self) -> f64 {
        -self.objective
    }
}

/// Minimizes `−R + λʳ·ΣΦ` over net powers drawn from `levels` evenly spaced
/// values in `[−P_max, P_max]` per interval (positive values discharge).
/// Points whose SoC leaves `[s_min, s_max]` are skipped.
pub fn brute_force_optimum(problem: &DispatchProblem, levels: usize) -> Result<GridOptimum> {
    problem.validate()?;
    let t = problem.horizon();
    if t > GRID_MAX_HORIZON || levels > GRID_MAX_LEVELS {
        return Err(Error::GridTooLarge((levels as u128).saturating_pow(t as u32)));
    }
    if levels < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 grid levels, got {levels}")));
    }
    let b = &problem.battery;
    let grid: Vec<f64> =
        (0..levels).map(|k| -b.power_mw + 2.0 * b.power_mw * k as f64 / (levels - 1) as f64).collect();
    let total = (levels as u64).pow(t as u32);
    let mut digits = vec![0usize; t];
    let mut c = vec![0.0; t];
    let mut d = vec![0.0; t];
    let mut best: Option<GridOptimum> = None;
    let mut feasible = 0;
    // tolerate rounding in the SoC recursion at the bounds
    let eps = 1e-12;
    for _ in 0..total {
        for i in 0..t {
            let p = grid[digits[i]];
            c[i] = (-p).max(0.0);
            d[i] = p.max(0.0);
        }
        let s = soc_trajectory(&c, &d, b);
        if s.iter().all(|&v| v >= b.soc_min - eps && v <= b.soc_max + eps) {
            feasible += 1;
            let u = objective_terms(&c, &d, problem)?.value();
            if best.as_ref().is_none_or(|g| u < g.objective) {
                best = Some(GridOptimum {
                    objective: u,
                    charge: c.clone(),
                    discharge: d.clone(),
                    evaluations: 0,
                    feasible_points: 0,
                });
            }
        }
        for digit in digits.iter_mut() {
            *digit += 1;
            if *digit < levels {
                break;
            }
            *digit = 0;
        }
    }
    let mut best = best.ok_or_else(|| Error::Infeasible("no feasible grid point".into()))?;
    best.evaluations = total;
    best.feasible_points = feasible;
    Ok(best)
}

/// Oracle suites selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Convexity,
    Merge,
    Perturbation,
    Gradient,
    SolverGap,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["convexity", "merge", "perturbation", "gradient", "solver-gap", "all"];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Convexity => "convexity",
            Suite::Merge => "merge",
            Suite::Perturbation => "perturbation",
            Suite::Gradient => "gradient",
            Suite::SolverGap => "solver-gap",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "convexity" => Suite::Convexity,
            "merge" => Suite::Merge,
            "perturbation" => Suite::Perturbation,
            "gradient" => Suite::Gradient,
            "solver-gap" => Suite::SolverGap,
            "all" => Suite::All,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown suite '{other}', expected one of {}",
                    Suite::NAMES.join(", ")
                )))
            }
        })
    }
}

/// Inputs that reproduce one failed case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum Reproducer {
    Convexity { s1: Vec<f64>, s2: Vec<f64>, lambda: f64, model: StressModel },
    Merge { profile: Vec<f64>, index: usize, model: StressModel },
    Perturbation { profile: Vec<f64>, index: usize, amplitude: f64 },
    Function { x: Vec<f64>, model: StressModel },
    Gradient { charge: Vec<f64>, discharge: Vec<f64>, barrier_lambda: f64, problem: Box<DispatchProblem> },
    SolverGap { problem: Box<DispatchProblem>, config: SolverConfig, levels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub excess: f64,
    pub inputs: Reproducer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub model: Option<String>,
    pub seed: u64,
    pub samples: usize,
    /// Cases drawn but excluded by the property's precondition (kinks for
    /// gradient checks).
    pub skipped: usize,
    pub tolerance: f64,
    pub violations: usize,
    /// Largest `value − bound` among violations, 0 when there are none.
    pub worst_violation: f64,
    /// Largest `value − bound` over all cases, negative when every case holds
    /// with room to spare.
    pub max_excess: f64,
    /// Up to [`MAX_REPRODUCERS`] failing cases, largest excess first.
    pub failures: Vec<Violation>,
}

pub const MAX_REPRODUCERS: usize = 5;

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

struct Tally {
    report: PropertyReport,
}

impl Tally {
    fn new(property: &str, model: Option<&StressModel>, seed: u64, tolerance: f64) -> Self {
        Self {
            report: PropertyReport {
                property: property.to_string(),
                model: model.map(model_label),
                seed,
                samples: 0,
                skipped: 0,
                tolerance,
                violations: 0,
                worst_violation: 0.0,
                max_excess: f64::NEG_INFINITY,
                failures: vec![],
            },
        }
    }

    fn record(&mut self, check: Check, inputs: impl FnOnce() -> Reproducer) {
        let r = &mut self.report;
        let excess = check.excess();
        r.samples += 1;
        r.max_excess = r.max_excess.max(excess);
        if !check.holds(r.tolerance) || excess.is_nan() {
            r.violations += 1;
            r.worst_violation = r.worst_violation.max(excess);
            r.failures.push(Violation { excess, inputs: inputs() });
            r.failures.sort_by(|a, b| b.excess.total_cmp(&a.excess));
            r.failures.truncate(MAX_REPRODUCERS);
        }
    }

    fn finish(mut self) -> PropertyReport {
        if self.report.samples == 0 {
            self.report.max_excess = 0.0;
        }
        self.report
    }
}

fn model_label(m: &StressModel) -> String {
    let coeffs: Vec<String> = m.coefficients().iter().map(|c| format!("{c:e}")).collect();
    format!("{}({})", m.variant_name(), coeffs.join(", "))
}

/// Stress models exercised by the suites: the case-study polynomial, a
/// throughput-linear model and a steep exponential.
pub fn suite_models() -> Vec<StressModel> {
    vec![
        StressModel::reference(),
        StressModel::Linear { k1: 1.5e-4 },
        StressModel::Exponential { k2: 2e-4, k3: 1.5 },
    ]
}

/// Independent stream per (property, model) pair so that suites can be run
/// alone or together with identical results.
fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random SoC profile in `[0, 1]` with `len` samples. Mixes independent
/// draws, random walks and profiles quantized to a coarse grid (which
/// produce flat runs and tied extremes).
pub fn random_profile(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    match rng.random_range(0..3) {
        0 => (0..len).map(|_| rng.random::<f64>()).collect(),
        1 => {
            let scale = rng.random_range(0.01..0.4);
            let mut x: f64 = rng.random();
            (0..len)
                .map(|_| {
                    x = (x + scale * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0);
                    x
                })
                .collect()
        }
        _ => {
            let steps = rng.random_range(2..=10) as f64;
            (0..len).map(|_| (rng.random::<f64>() * steps).round() / steps).collect()
        }
    }
}

/// Sequence with the same direction pattern as `s` at every step.
fn comonotone_partner(rng: &mut impl Rng, s: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.len());
    out.push(s[0]);
    for w in s.windows(2) {
        let k: f64 = rng.random_range(0.0..1.0);
        out.push(out.last().unwrap() + k * (w[1] - w[0]));
    }
    out
}

pub fn run_convexity(seed: u64, samples: usize, model: &StressModel) -> PropertyReport {
    let mut rng = rng_for(seed, 1);
    let mut tally = Tally::new("convexity", Some(model), seed, CONVEXITY_TOLERANCE);
    for k in 0..samples {
        let len = rng.random_range(2..=51);
        let s1 = random_profile(&mut rng, len);
        let s2 = if k % 10 == 9 { comonotone_partner(&mut rng, &s1) } else { random_profile(&mut rng, len) };
        let lambda = rng.random::<f64>();
        let check = check_convexity(&s1, &s2, lambda, model).expect("equal lengths and lambda in range");
        tally.record(check, || Reproducer::Convexity { s1, s2, lambda, model: *model });
    }
    tally.finish()
}

pub fn run_merge(seed: u64, samples: usize, model: &StressModel) -> PropertyReport {
    let mut rng = rng_for(seed, 2);
    let mut tally = Tally::new("adjacent-merge", Some(model), seed, PROPERTY_TOLERANCE);
    for _ in 0..samples {
        let len = rng.random_range(3..=40);
        let s = random_profile(&mut rng, len);
        let i = rng.random_range(0..len - 2);
        let check = check_adjacent_merge(&s, i, model).expect("index in range");
        tally.record(check, || Reproducer::Merge { profile: s, index: i, model: *model });
    }
    tally.finish()
}

pub fn run_perturbation(seed: u64, samples: usize) -> PropertyReport {
    let mut rng = rng_for(seed, 3);
    let mut tally = Tally::new("perturbation-bounds", None, seed, PROPERTY_TOLERANCE);
    for _ in 0..samples {
        let len = rng.random_range(2..=40);
        let s = random_profile(&mut rng, len);
        let i = rng.random_range(0..len);
        let mut amplitude: f64 = rng.random_range(-0.5..0.5);
        if amplitude == 0.0 {
            amplitude = 0.25;
        }
        let check = check_perturbation_bounds(&s, i, amplitude).expect("index in range");
        tally.record(check, || Reproducer::Perturbation { profile: s, index: i, amplitude });
    }
    tally.finish()
}

pub fn run_superadditivity(seed: u64, samples: usize, model: &StressModel) -> PropertyReport {
    let mut rng = rng_for(seed, 4);
    let mut tally = Tally::new("superadditivity", Some(model), seed, PROPERTY_TOLERANCE);
    for _ in 0..samples {
        let total: f64 = rng.random_range(1e-9..1.0);
        let x1 = total * rng.random_range(1e-6..1.0);
        let x2 = total - x1;
        if !(x2 > 0.0) {
            tally.report.skipped += 1;
            continue;
        }
        tally.record(check_superadditivity(x1, x2, model), || Reproducer::Function { x: vec![x1, x2], model: *model });
    }
    tally.finish()
}

pub fn run_difference_bound(seed: u64, samples: usize, model: &StressModel) -> PropertyReport {
    let mut rng = rng_for(seed, 5);
    let mut tally = Tally::new("difference-bound", Some(model), seed, PROPERTY_TOLERANCE);
    for _ in 0..samples {
        let x1: f64 = rng.random_range(1e-9..1.0);
        let x2 = x1 * rng.random_range(1e-6..=1.0);
        tally.record(check_difference_bound(x1, x2, model), || Reproducer::Function { x: vec![x1, x2], model: *model });
    }
    tally.finish()
}

/// Random sign-mixed terms with positive sum `D ≤ 1`, every `|x| ≤ D` and
/// `negatives` negative terms.
pub fn random_signed_terms(rng: &mut impl Rng, negatives: usize) -> Vec<f64> {
    let d: f64 = rng.random_range(0.05..1.0);
    let negatives: Vec<f64> = (0..negatives).map(|_| -d * rng.random_range(1e-3..1.0)).collect();
    // positives must add up to D + Σ|neg| with each at most D: spread the
    // total evenly over enough parts, then perturb without leaving (0, D]
    let need = d - negatives.iter().sum::<f64>();
    let parts = (need / d).floor() as usize + 1 + rng.random_range(0..=2);
    let base = need / parts as f64;
    let mut e: Vec<f64> = (0..parts).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = e.iter().sum::<f64>() / parts as f64;
    e.iter_mut().for_each(|v| *v -= mean);
    let widest = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let room = (d / base - 1.0).min(1.0);
    let scale = if widest > 0.0 { 0.999 * room / widest } else { 0.0 };
    let mut xs: Vec<f64> = e.iter().map(|v| base * (1.0 + scale * v)).collect();
    xs.extend(negatives);
    xs.shuffle(rng);
    xs
}

/// Signed aggregation bound with one to four negative terms, the full range
/// of its hypothesis. With two or more negatives the bound is false for every
/// strictly convex stress (`x = [1, 1, −½, −½]`, `g(x) = x²` gives
/// `1 ≥ 1.5`), so this property is expected to report violations.
pub fn run_signed_aggregation(seed: u64, samples: usize, model: &StressModel) -> PropertyReport {
    signed_aggregation(seed, samples, model, "signed-aggregation", 6, 1..=4)
}

/// Signed aggregation bound with exactly one negative term, where it follows
/// from majorization: positives capped at `D` and summing to `D + |x⁻|` are
/// majorized by `(D, |x⁻|)`.
pub fn run_signed_aggregation_single(seed: u64, samples: usize, model: &StressModel) -> PropertyReport {
    signed_aggregation(seed, samples, model, "signed-aggregation-one-negative", 9, 1..=1)
}

fn signed_aggregation(
    seed: u64,
    samples: usize,
    model: &StressModel,
    name: &str,
    stream: u64,
    negatives: std::ops::RangeInclusive<usize>,
) -> PropertyReport {
    let mut rng = rng_for(seed, stream);
    let mut tally = Tally::new(name, Some(model), seed, PROPERTY_TOLERANCE);
    for _ in 0..samples {
        let n = rng.random_range(negatives.clone());
        let xs = random_signed_terms(&mut rng, n);
        match check_signed_aggregation(&xs, model) {
            Ok(check) => tally.record(check, || Reproducer::Function { x: xs, model: *model }),
            // rounding pushed a term just past the sum
            Err(_) => tally.report.skipped += 1,
        }
    }
    tally.finish()
}

/// Small dispatch instance with a random signal. Three-minute intervals make
/// single steps move SoC by up to ~0.2 so that cycles of all sizes appear.
pub fn toy_problem(rng: &mut impl Rng, horizon: usize, model: StressModel) -> DispatchProblem {
    let mut battery = BatteryParams::regulation_default();
    battery.interval_hours = 0.05;
    let signal = (0..horizon).map(|_| rng.random_range(-1.0..=1.0)).collect();
    DispatchProblem {
        battery,
        model,
        market: MarketParams::regulation_default(),
        signal: RegulationSignal::new(signal).expect("values in [-1, 1]"),
    }
}

/// Strictly interior `(c, d)` with every barrier argument above `margin`.
pub fn random_interior_point(rng: &mut impl Rng, problem: &DispatchProblem, margin: f64) -> (Vec<f64>, Vec<f64>) {
    let b = &problem.battery;
    let t = problem.horizon();
    loop {
        let c: Vec<f64> = (0..t).map(|_| rng.random_range(0.05..0.95) * b.power_mw).collect();
        let d: Vec<f64> = (0..t).map(|_| rng.random_range(0.05..0.95) * b.power_mw).collect();
        let s = soc_trajectory(&c, &d, b);
        if interior_slack(&c, &d, &s, b) > margin {
            return (c, d);
        }
    }
}

pub fn run_gradient(seed: u64, samples: usize) -> PropertyReport {
    let mut rng = rng_for(seed, 7);
    let mut tally = Tally::new("subgradient-vs-finite-difference", None, seed, GRADIENT_TOLERANCE);
    let models = suite_models();
    while tally.report.samples < samples {
        let model = models[tally.report.samples % models.len()];
        let horizon = rng.random_range(2..=10);
        let problem = toy_problem(&mut rng, horizon, model);
        let (c, d) = random_interior_point(&mut rng, &problem, 0.02);
        let barrier_lambda = 10f64.powf(rng.random_range(1.0..5.0));
        let analytic = subgradient(&c, &d, &problem, barrier_lambda, SubgradientRule::Exact)
            .expect("interior point");
        let numeric = finite_difference_subgradient(&c, &d, &problem, barrier_lambda, 1e-6).expect("interior point");
        if !numeric.kinks.is_empty() {
            tally.report.skipped += 1;
            continue;
        }
        let err = gradient_relative_error((&analytic.0, &analytic.1), &numeric);
        tally.record(Check { value: err, bound: 0.0 }, || Reproducer::Gradient {
            charge: c,
            discharge: d,
            barrier_lambda,
            problem: Box::new(problem),
        });
    }
    tally.finish()
}

/// Solver settings used against the grid oracle.
pub fn solver_gap_config() -> SolverConfig {
    SolverConfig { alpha: 1e-4, inner_iters: 4000, ..SolverConfig::default() }
}

pub const SOLVER_GAP_HORIZON: usize = 6;
pub const SOLVER_GAP_LEVELS: usize = 7;

/// Outcome of one solver-versus-grid comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCase {
    pub solver_objective: f64,
    pub grid_objective: f64,
    pub gap_bound: f64,
    /// Wall time of the solve alone, without the grid search.
    pub solve_time: Duration,
}

impl GapCase {
    /// `U_best − U_grid ≤ G²α/2`, before the extra slack.
    pub fn check(&self) -> Check {
        Check { value: self.solver_objective - self.grid_objective, bound: self.gap_bound }
    }
}

pub fn solver_gap_case(problem: &DispatchProblem, config: &SolverConfig, levels: usize) -> Result<GapCase> {
    let start = Instant::now();
    let sol = solve(problem, config)?;
    let solve_time = start.elapsed();
    let grid = brute_force_optimum(problem, levels)?;
    Ok(GapCase { solver_objective: sol.u_best, grid_objective: grid.objective, gap_bound: sol.gap_bound, solve_time })
}

/// The seeded toy instances of the solver-gap suite with their outcomes.
pub fn solver_gap_cases(seed: u64, samples: usize) -> Result<Vec<(DispatchProblem, GapCase)>> {
    let mut rng = rng_for(seed, 8);
    let config = solver_gap_config();
    (0..samples)
        .map(|_| {
            let problem = toy_problem(&mut rng, SOLVER_GAP_HORIZON, StressModel::reference());
            let case = solver_gap_case(&problem, &config, SOLVER_GAP_LEVELS)?;
            Ok((problem, case))
        })
        .collect()
}

pub fn run_solver_gap(seed: u64, samples: usize) -> Result<PropertyReport> {
    let mut tally = Tally::new("solver-vs-grid", Some(&StressModel::reference()), seed, SOLVER_GAP_SLACK);
    let config = solver_gap_config();
    for (problem, case) in solver_gap_cases(seed, samples)? {
        tally.record(case.check(), || Reproducer::SolverGap {
            problem: Box::new(problem),
            config: config.clone(),
            levels: SOLVER_GAP_LEVELS,
        });
    }
    Ok(tally.finish())
}

/// Each solver-gap case runs a full solve and a grid search, so the suite
/// runs one case per this many samples of the cheap properties.
pub const SOLVER_GAP_SAMPLE_RATIO: usize = 50;

pub fn solver_gap_instances(samples: usize) -> usize {
    samples.div_ceil(SOLVER_GAP_SAMPLE_RATIO)
}

/// Runs `suite` over every suite model. `samples` is the number of cases per
/// property and model.
pub fn run_suite(suite: Suite, seed: u64, samples: usize) -> Result<Vec<PropertyReport>> {
    run_suite_with(suite, seed, samples, &suite_models())
}

pub fn run_suite_with(suite: Suite, seed: u64, samples: usize, models: &[StressModel]) -> Result<Vec<PropertyReport>> {
    let mut out = vec![];
    let wants = |s: Suite| suite == s || suite == Suite::All;
    if wants(Suite::Convexity) {
        for m in models {
            out.push(run_convexity(seed, samples, m));
        }
        for m in models {
            out.push(run_superadditivity(seed, samples, m));
            out.push(run_difference_bound(seed, samples, m));
            out.push(run_signed_aggregation(seed, samples, m));
            out.push(run_signed_aggregation_single(seed, samples, m));
        }
    }
    if wants(Suite::Merge) {
        for m in models {
            out.push(run_merge(seed, samples, m));
        }
    }
    if wants(Suite::Perturbation) {
        out.push(run_perturbation(seed, samples));
    }
    if wants(Suite::Gradient) {
        out.push(run_gradient(seed, samples));
    }
    if wants(Suite::SolverGap) {
        out.push(run_solver_gap(seed, solver_gap_instances(samples))?);
    }
    Ok(out)
}
