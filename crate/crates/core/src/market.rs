//! Frequency-regulation market: revenue, benchmark policies, posterior
//! degradation assessment and annualized economics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::degradation::{cycle_cost_raw, lifetime_months, BatteryParams, StressModel};
use crate::error::{Error, Result};
use crate::solver::{soc_trajectory, solve, DispatchProblem, Solution, SolverConfig};

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// How the mismatch between instruction and response is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyForm {
    /// `|C·r − (d − c)|`: error between instructed and delivered net output.
    #[default]
    Signed,
    /// `|(C·r_c − c) + (C·r_d − d)|`, term by term as the revenue is written
    /// in the original formulation. Rewards opposing the instruction.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Capacity payment, $ per MW of committed capacity per hour.
    pub capacity_price: f64,
    /// Mismatch penalty, $ per MWh of tracking error.
    pub penalty_price: f64,
    /// Committed regulation capacity `C`, MW.
    pub capacity_mw: f64,
    #[serde(default)]
    pub penalty_form: PenaltyForm,
}

impl MarketParams {
    pub fn regulation_default() -> Self {
        Self { capacity_price: 50.0, penalty_price: 150.0, capacity_mw: 1.0, penalty_form: PenaltyForm::Signed }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("capacity_price", self.capacity_price),
            ("penalty_price", self.penalty_price),
            ("capacity_mw", self.capacity_mw),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-unit regulation instructions; positive values request discharge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulationSignal {
    r: Vec<f64>,
}

impl RegulationSignal {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = r.iter().enumerate().find(|(_, v)| !(v.is_finite() && v.abs() <= 1.0)) {
            return Err(Error::InvalidParameter(format!("signal sample {i} = {v} is outside [-1, 1]")));
        }
        Ok(Self { r })
    }

    pub fn values(&self) -> &[f64] {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Charging part `r_c = max(−r, 0)`.
    pub fn charge_part(&self, t: usize) -> f64 {
        (-self.r[t]).max(0.0)
    }

    /// Discharging part `r_d = max(r, 0)`.
    pub fn discharge_part(&self, t: usize) -> f64 {
        self.r[t].max(0.0)
    }
}

fn mismatch(form: PenaltyForm, cap: f64, r: f64, c: f64, d: f64) -> f64 {
    match form {
        PenaltyForm::Signed => cap * r - (d - c),
        PenaltyForm::Literal => cap * ((-r).max(0.0) + r.max(0.0)) - c - d,
    }
}

/// Capacity payment and mismatch penalty over the horizon, in dollars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevenueBreakdown {
    pub capacity_payment: f64,
    pub mismatch_penalty: f64,
}

impl RevenueBreakdown {
    pub fn net(&self) -> f64 {
        self.capacity_payment - self.mismatch_penalty
    }
}

pub fn revenue_breakdown(
    charge: &[f64],
    discharge: &[f64],
    market: &MarketParams,
    signal: &RegulationSignal,
    interval_hours: f64,
) -> Result<RevenueBreakdown> {
    let t = signal.len();
    for v in [charge, discharge] {
        if v.len() != t {
            return Err(Error::LengthMismatch { expected: t, got: v.len() });
        }
    }
    let capacity_payment = market.capacity_price * market.capacity_mw * t as f64 * interval_hours;
    let mismatch_penalty = (0..t)
        .map(|i| mismatch(market.penalty_form, market.capacity_mw, signal.r[i], charge[i], discharge[i]).abs())
        .sum::<f64>()
        * market.penalty_price
        * interval_hours;
    Ok(RevenueBreakdown { capacity_payment, mismatch_penalty })
}

pub fn revenue(
    charge: &[f64],
    discharge: &[f64],
    market: &MarketParams,
    signal: &RegulationSignal,
    interval_hours: f64,
) -> Result<f64> {
    revenue_breakdown(charge, discharge, market, signal, interval_hours).map(|b| b.net())
}

/// A supergradient of the revenue: `(∂R/∂c, ∂R/∂d)`. At an exact match the
/// zero element of the subdifferential of `|·|` is used.
pub fn revenue_gradient(
    charge: &[f64],
    discharge: &[f64],
    market: &MarketParams,
    signal: &RegulationSignal,
    interval_hours: f64,
) -> (Vec<f64>, Vec<f64>) {
    let w = market.penalty_price * interval_hours;
    let t = signal.len();
    let mut gc = vec![0.0; t];
    let mut gd = vec![0.0; t];
    for i in 0..t {
        let e = mismatch(market.penalty_form, market.capacity_mw, signal.r[i], charge[i], discharge[i]);
        let sign = if e > 0.0 {
            1.0
        } else if e < 0.0 {
            -1.0
        } else {
            0.0
        };
        match market.penalty_form {
            // R contains −w·|C·r − d + c|
            PenaltyForm::Signed => {
                gc[i] = -w * sign;
                gd[i] = w * sign;
            }
            // R contains −w·|C·|r| − c − d|
            PenaltyForm::Literal => {
                gc[i] = w * sign;
                gd[i] = w * sign;
            }
        }
    }
    (gc, gd)
}

/// Follows the instruction as closely as power and SoC limits allow, one
/// interval at a time. Never charges and discharges in the same interval.
pub fn policy_follow(signal: &RegulationSignal, params: &BatteryParams, capacity_mw: f64) -> (Vec<f64>, Vec<f64>) {
    let t = signal.len();
    let mut c = vec![0.0; t];
    let mut d = vec![0.0; t];
    let mut s = params.soc0;
    for i in 0..t {
        let want_d = capacity_mw * signal.discharge_part(i);
        let want_c = capacity_mw * signal.charge_part(i);
        if want_d > 0.0 {
            let room = ((s - params.soc_min) / params.discharge_loss()).max(0.0);
            d[i] = want_d.min(params.power_mw).min(room);
            s = (s - d[i] * params.discharge_loss()).max(params.soc_min);
        } else if want_c > 0.0 {
            let room = ((params.soc_max - s) / params.charge_gain()).max(0.0);
            c[i] = want_c.min(params.power_mw).min(room);
            s = (s + c[i] * params.charge_gain()).min(params.soc_max);
        }
    }
    (c, d)
}

/// Dispatch obtained by optimizing against a linear (throughput-priced)
/// degradation model with slope `k1`.
pub fn policy_linear_cost(problem: &DispatchProblem, config: &SolverConfig, k1: f64) -> Result<Solution> {
    let linear = DispatchProblem { model: StressModel::linear(k1)?, ..problem.clone() };
    solve(&linear, config)
}

/// Degradation cost of a dispatch in dollars, scored after the fact with the
/// rainflow model `model`.
pub fn posterior_assessment(
    charge: &[f64],
    discharge: &[f64],
    params: &BatteryParams,
    model: &StressModel,
) -> Result<f64> {
    if charge.len() != discharge.len() {
        return Err(Error::LengthMismatch { expected: charge.len(), got: discharge.len() });
    }
    let s = soc_trajectory(charge, discharge, params);
    Ok(params.replacement_cost() * cycle_cost_raw(&s, model))
}

/// Economics of one policy. Dollar figures cover `horizon_hours` scaled by
/// `annualization_factor` (1 for a raw horizon report).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomicsReport {
    pub horizon_hours: f64,
    pub annualization_factor: f64,
    pub capacity_payment: f64,
    pub mismatch_penalty: f64,
    /// Capacity payment net of mismatch penalties.
    pub regulation_service_payment: f64,
    pub modeled_battery_degradation: f64,
    pub actual_battery_degradation: f64,
    pub total_regulation_utility: f64,
    /// `None` when the dispatch causes no degradation.
    pub battery_life_expectancy_months: Option<f64>,
    #[serde(skip)]
    replacement_cost: f64,
}

impl EconomicsReport {
    pub fn new(
        horizon_hours: f64,
        revenue: RevenueBreakdown,
        modeled_degradation: f64,
        actual_degradation: f64,
        replacement_cost: f64,
    ) -> Self {
        let lifetime = if actual_degradation > 0.0 && horizon_hours > 0.0 {
            lifetime_months(actual_degradation * HOURS_PER_YEAR / horizon_hours, replacement_cost).ok()
        } else {
            None
        };
        Self {
            horizon_hours,
            annualization_factor: 1.0,
            capacity_payment: revenue.capacity_payment,
            mismatch_penalty: revenue.mismatch_penalty,
            regulation_service_payment: revenue.net(),
            modeled_battery_degradation: modeled_degradation,
            actual_battery_degradation: actual_degradation,
            total_regulation_utility: revenue.net() - actual_degradation,
            battery_life_expectancy_months: lifetime,
            replacement_cost,
        }
    }

    /// Evaluates a dispatch: revenue under `market`, modeled degradation with
    /// `modeled` (zero when `None`), actual degradation with `reference`.
    #[allow(clippy::too_many_arguments)]
    pub fn assess(
        charge: &[f64],
        discharge: &[f64],
        params: &BatteryParams,
        market: &MarketParams,
        signal: &RegulationSignal,
        modeled: Option<&StressModel>,
        reference: &StressModel,
    ) -> Result<Self> {
        let rev = revenue_breakdown(charge, discharge, market, signal, params.interval_hours)?;
        let modeled_cost = match modeled {
            Some(m) => posterior_assessment(charge, discharge, params, m)?,
            None => 0.0,
        };
        let actual = posterior_assessment(charge, discharge, params, reference)?;
        Ok(Self::new(signal.len() as f64 * params.interval_hours, rev, modeled_cost, actual, params.replacement_cost()))
    }

    pub fn replacement_cost(&self) -> f64 {
        self.replacement_cost
    }
}

/// Scales every dollar figure of a horizon report to one year.
pub fn annualize(report: &EconomicsReport) -> Result<EconomicsReport> {
    if !(report.horizon_hours > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {} h",
            report.horizon_hours
        )));
    }
    let k = HOURS_PER_YEAR / report.horizon_hours;
    let actual = report.actual_battery_degradation * k;
    let lifetime = if actual > 0.0 { lifetime_months(actual, report.replacement_cost).ok() } else { None };
    Ok(EconomicsReport {
        horizon_hours: report.horizon_hours,
        annualization_factor: report.annualization_factor * k,
        capacity_payment: report.capacity_payment * k,
        mismatch_penalty: report.mismatch_penalty * k,
        regulation_service_payment: report.regulation_service_payment * k,
        modeled_battery_degradation: report.modeled_battery_degradation * k,
        actual_battery_degradation: actual,
        total_regulation_utility: report.total_regulation_utility * k,
        battery_life_expectancy_months: lifetime,
        replacement_cost: report.replacement_cost,
    })
}

/// First-order autoregressive regulation signal. `correlation` applies per
/// `reference_step_seconds`; other sample spacings rescale it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub correlation: f64,
    pub innovation_std: f64,
    pub reference_step_seconds: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        Self { correlation: 0.9, innovation_std: 0.2, reference_step_seconds: 4.0 }
    }
}

pub fn generate_signal(seed: u64, horizon: usize, interval_hours: f64, spec: &SignalSpec) -> Result<RegulationSignal> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("signal length must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.correlation) || !(spec.innovation_std > 0.0) || !(spec.reference_step_seconds > 0.0)
    {
        return Err(Error::InvalidParameter(format!("invalid signal spec {spec:?}")));
    }
    let rho = spec.correlation.powf(interval_hours * 3600.0 / spec.reference_step_seconds);
    // keep the stationary spread independent of the sample spacing
    let stationary = spec.innovation_std / (1.0 - spec.correlation * spec.correlation).sqrt();
    let sigma = stationary * (1.0 - rho * rho).sqrt();
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    let r = (0..horizon)
        .map(|_| {
            x = rho * x + noise.sample(&mut rng);
            x.clamp(-1.0, 1.0)
        })
        .collect();
    RegulationSignal::new(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn flat_signal(v: f64, n: usize) -> RegulationSignal {
        RegulationSignal::new(vec![v; n]).unwrap()
    }

    #[test]
    fn perfect_following_earns_full_payment() {
        let m = MarketParams::regulation_default();
        let sig = RegulationSignal::new(vec![0.5, -0.3, 0.0, 1.0]).unwrap();
        let c = vec![0.0, 0.3, 0.0, 0.0];
        let d = vec![0.5, 0.0, 0.0, 1.0];
        let ts = 0.25;
        assert_relative_eq!(revenue(&c, &d, &m, &sig, ts).unwrap(), 50.0 * 4.0 * ts, max_relative = 1e-15);
    }

    #[test]
    fn annual_payment_of_one_megawatt() {
        let m = MarketParams::regulation_default();
        let sig = flat_signal(0.0, 8760);
        let z = vec![0.0; 8760];
        assert_abs_diff_eq!(revenue(&z, &z, &m, &sig, 1.0).unwrap(), 438_000.0, epsilon = 1e-6);
    }

    #[test]
    fn idle_battery_pays_full_penalty() {
        let m = MarketParams::regulation_default();
        let n = 10;
        let ts = 4.0 / 3600.0;
        let z = vec![0.0; n];
        let b = revenue_breakdown(&z, &z, &m, &flat_signal(1.0, n), ts).unwrap();
        assert_relative_eq!(b.mismatch_penalty, 150.0 * 1.0 * n as f64 * ts, max_relative = 1e-14);
    }

    #[test]
    fn literal_penalty_form_rewards_opposing_response() {
        let mut m = MarketParams::regulation_default();
        let sig = flat_signal(1.0, 1);
        // instructed to discharge 1 MW, battery charges 1 MW instead
        let signed = revenue_breakdown(&[1.0], &[0.0], &m, &sig, 1.0).unwrap();
        m.penalty_form = PenaltyForm::Literal;
        let literal = revenue_breakdown(&[1.0], &[0.0], &m, &sig, 1.0).unwrap();
        assert_relative_eq!(signed.mismatch_penalty, 300.0);
        assert_relative_eq!(literal.mismatch_penalty, 0.0);
    }

    #[test]
    fn revenue_length_mismatch() {
        let m = MarketParams::regulation_default();
        assert!(revenue(&[0.0], &[0.0, 0.0], &m, &flat_signal(0.0, 2), 1.0).is_err());
    }

    #[test]
    fn follow_within_limits_tracks_exactly() {
        let p = BatteryParams::regulation_default();
        let sig = RegulationSignal::new(vec![0.3, -0.2, 0.5, -0.5, 0.0]).unwrap();
        let (c, d) = policy_follow(&sig, &p, 1.0);
        for t in 0..sig.len() {
            assert_abs_diff_eq!(d[t] - c[t], sig.values()[t], epsilon = 1e-15);
        }
        let (c, d) = policy_follow(&flat_signal(0.0, 4), &p, 1.0);
        assert!(c.iter().chain(d.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn follow_saturates_at_empty() {
        let p = BatteryParams::regulation_default();
        // 0.5·E of energy at P/η_d: 0.5·0.25 h·0.95 = 0.11875 h = 106.875 intervals of 4 s
        let saturation_hours = 0.5 * p.energy_mwh * p.eta_d / p.power_mw;
        let full_steps = (saturation_hours / p.interval_hours).floor() as usize;
        assert_eq!(full_steps, 106);
        let (_, d) = policy_follow(&flat_signal(1.0, 200), &p, 1.0);
        assert!(d[..full_steps].iter().all(|&v| v == 1.0));
        assert!(d[full_steps] > 0.0 && d[full_steps] < 1.0);
        assert!(d[full_steps + 1..].iter().all(|&v| v == 0.0));
        let s = soc_trajectory(&vec![0.0; 200], &d, &p);
        assert!(s.iter().all(|&v| v >= p.soc_min - 1e-12));
    }

    #[test]
    fn posterior_of_idle_and_round_trip() {
        let p = BatteryParams::regulation_default();
        let m = StressModel::reference();
        assert_eq!(posterior_assessment(&[0.0; 5], &[0.0; 5], &p, &m).unwrap(), 0.0);
        // lossless 0.5 -> 0.0 -> 0.5: two half cycles of depth 0.5
        let q = BatteryParams { eta_c: 1.0, eta_d: 1.0, interval_hours: 0.125, ..p };
        let cost = posterior_assessment(&[0.0, 1.0], &[1.0, 0.0], &q, &m).unwrap();
        assert_relative_eq!(cost, 2.0 * m.phi(0.5) * 150_000.0, max_relative = 1e-12);
    }

    #[test]
    fn full_depth_cycle_costs_135_dollars() {
        let p = BatteryParams::regulation_default();
        let cost = p.replacement_cost() * cycle_cost_raw(&[0.0, 1.0, 0.0], &StressModel::reference());
        assert_relative_eq!(cost, 135.0, max_relative = 1e-12);
    }

    #[test]
    fn annualize_two_hour_report() {
        let rev = RevenueBreakdown { capacity_payment: 100.0, mismatch_penalty: 10.0 };
        let r = EconomicsReport::new(2.0, rev, 20.0, 30.0, 150_000.0);
        assert_relative_eq!(r.total_regulation_utility, 60.0);
        let a = annualize(&r).unwrap();
        assert_relative_eq!(a.annualization_factor, 4380.0);
        assert_relative_eq!(a.capacity_payment, 438_000.0);
        assert_relative_eq!(
            a.total_regulation_utility,
            a.regulation_service_payment - a.actual_battery_degradation,
            max_relative = 1e-14
        );
        assert_relative_eq!(a.battery_life_expectancy_months.unwrap(), 12.0 * 150_000.0 / (30.0 * 4380.0));
    }

    #[test]
    fn signal_generator_is_deterministic_and_bounded() {
        let spec = SignalSpec::default();
        let ts = 4.0 / 3600.0;
        let a = generate_signal(7, 500, ts, &spec).unwrap();
        let b = generate_signal(7, 500, ts, &spec).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_signal(8, 500, ts, &spec).unwrap());
        assert!(a.values().iter().all(|v| v.abs() <= 1.0));
        assert!(generate_signal(7, 0, ts, &spec).is_err());
    }

    #[test]
    fn signal_long_run_mean_is_near_zero() {
        let r = generate_signal(11, 100_000, 4.0 / 3600.0, &SignalSpec::default()).unwrap();
        let mean = r.values().iter().sum::<f64>() / r.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn signal_split_is_exact() {
        let r = RegulationSignal::new(vec![0.4, -0.7, 0.0]).unwrap();
        for t in 0..3 {
            assert_eq!(r.discharge_part(t) - r.charge_part(t), r.values()[t]);
            assert_eq!(r.discharge_part(t) * r.charge_part(t), 0.0);
        }
        assert!(RegulationSignal::new(vec![1.5]).is_err());
    }
}
