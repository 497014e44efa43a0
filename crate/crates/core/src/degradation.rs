//! Depth-of-discharge stress functions and the rainflow degradation cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rainflow::{count_cycles, count_cycles_raw, CycleKind, CycleSet, SocProfile};

/// Convex stress function `Φ(d)` mapping a cycle depth to fractional life loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum StressModel {
    /// `k1·d`
    Linear { k1: f64 },
    /// `k2·d·exp(k3·d)`
    Exponential { k2: f64, k3: f64 },
    /// `k4·d^k5`
    Polynomial { k4: f64, k5: f64 },
}

impl StressModel {
    pub fn linear(k1: f64) -> Result<Self> {
        Self::Linear { k1 }.validated()
    }

    pub fn exponential(k2: f64, k3: f64) -> Result<Self> {
        Self::Exponential { k2, k3 }.validated()
    }

    pub fn polynomial(k4: f64, k5: f64) -> Result<Self> {
        Self::Polynomial { k4, k5 }.validated()
    }

    /// Builds a model without the convexity checks. Only meant for negative
    /// controls in the property suites.
    pub fn polynomial_unchecked(k4: f64, k5: f64) -> Self {
        Self::Polynomial { k4, k5 }
    }

    /// The degradation model used for the regulation case study.
    pub fn reference() -> Self {
        Self::Polynomial { k4: 4.5e-4, k5: 1.3 }
    }

    /// Zero coefficients are accepted (a free battery); negative ones are not.
    pub fn validated(self) -> Result<Self> {
        let ok = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {v}")))
            }
        };
        match self {
            Self::Linear { k1 } => ok("k1", k1)?,
            Self::Exponential { k2, k3 } => {
                ok("k2", k2)?;
                ok("k3", k3)?;
            }
            Self::Polynomial { k4, k5 } => {
                ok("k4", k4)?;
                if !(k5.is_finite() && k5 >= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "k5 must be at least 1 for a convex stress function, got {k5}"
                    )));
                }
            }
        }
        Ok(self)
    }

    /// Builds a model from a variant name and coefficient list.
    pub fn from_parts(variant: &str, coefficients: &[f64]) -> Result<Self> {
        let want = |n: usize| {
            if coefficients.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{variant} stress model takes {n} coefficient(s), got {}",
                    coefficients.len()
                )))
            }
        };
        match variant {
            "linear" => {
                want(1)?;
                Self::linear(coefficients[0])
            }
            "exponential" => {
                want(2)?;
                Self::exponential(coefficients[0], coefficients[1])
            }
            "polynomial" => {
                want(2)?;
                Self::polynomial(coefficients[0], coefficients[1])
            }
            other => Err(Error::InvalidParameter(format!("unknown stress model variant '{other}'"))),
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::Exponential { .. } => "exponential",
            Self::Polynomial { .. } => "polynomial",
        }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        match *self {
            Self::Linear { k1 } => vec![k1],
            Self::Exponential { k2, k3 } => vec![k2, k3],
            Self::Polynomial { k4, k5 } => vec![k4, k5],
        }
    }

    /// `Φ(d)` without a domain check.
    #[inline]
    pub fn phi(&self, d: f64) -> f64 {
        match *self {
            Self::Linear { k1 } => k1 * d,
            Self::Exponential { k2, k3 } => k2 * d * (k3 * d).exp(),
            Self::Polynomial { k4, k5 } => {
                if d <= 0.0 {
                    0.0
                } else {
                    k4 * d.powf(k5)
                }
            }
        }
    }

    /// `Φ'(d)` without a domain check.
    #[inline]
    pub fn phi_prime(&self, d: f64) -> f64 {
        match *self {
            Self::Linear { k1 } => k1,
            Self::Exponential { k2, k3 } => k2 * (1.0 + k3 * d) * (k3 * d).exp(),
            Self::Polynomial { k4, k5 } => {
                if k5 == 1.0 {
                    k4
                } else if d <= 0.0 {
                    0.0
                } else {
                    k4 * k5 * d.powf(k5 - 1.0)
                }
            }
        }
    }

    pub fn stress(&self, d: f64) -> Result<f64> {
        check_depth(d)?;
        Ok(self.phi(d))
    }

    pub fn derivative(&self, d: f64) -> Result<f64> {
        check_depth(d)?;
        Ok(self.phi_prime(d))
    }
}

fn check_depth(d: f64) -> Result<()> {
    if (0.0..=1.0).contains(&d) {
        Ok(())
    } else {
        Err(Error::DepthOutOfRange(d))
    }
}

pub fn stress(model: &StressModel, d: f64) -> Result<f64> {
    model.stress(d)
}

pub fn stress_derivative(model: &StressModel, d: f64) -> Result<f64> {
    model.derivative(d)
}

/// Physical and economic battery parameters. Powers in MW, energy in MWh,
/// time in hours, prices in dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub energy_mwh: f64,
    pub power_mw: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc0: f64,
    pub interval_hours: f64,
    /// Cell replacement price per MWh of capacity.
    pub cell_price_per_mwh: f64,
}

impl BatteryParams {
    /// 1 MW / 15 minute battery, 95 % one-way efficiency, 0.6 $/Wh cells,
    /// 4 s intervals.
    pub fn regulation_default() -> Self {
        Self {
            energy_mwh: 0.25,
            power_mw: 1.0,
            eta_c: 0.95,
            eta_d: 0.95,
            soc_min: 0.0,
            soc_max: 1.0,
            soc0: 0.5,
            interval_hours: 4.0 / 3600.0,
            cell_price_per_mwh: 600_000.0,
        }
    }

    /// Lossless battery with the given capacity, power and interval length.
    pub fn example(energy_mwh: f64, power_mw: f64, interval_hours: f64) -> Self {
        Self {
            energy_mwh,
            power_mw,
            eta_c: 1.0,
            eta_d: 1.0,
            soc_min: 0.0,
            soc_max: 1.0,
            soc0: 0.5,
            interval_hours,
            cell_price_per_mwh: 600_000.0,
        }
    }

    /// Replacement cost of the whole battery in dollars.
    pub fn replacement_cost(&self) -> f64 {
        self.cell_price_per_mwh * self.energy_mwh
    }

    /// SoC gained per MW of charging over one interval.
    pub fn charge_gain(&self) -> f64 {
        self.eta_c * self.interval_hours / self.energy_mwh
    }

    /// SoC lost per MW of discharging over one interval.
    pub fn discharge_loss(&self) -> f64 {
        self.interval_hours / (self.eta_d * self.energy_mwh)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        for (name, v) in [
            ("energy_mwh", self.energy_mwh),
            ("power_mw", self.power_mw),
            ("interval_hours", self.interval_hours),
            ("cell_price_per_mwh", self.cell_price_per_mwh),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("eta_c", self.eta_c), ("eta_d", self.eta_d)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return bad(format!(
                "soc bounds must satisfy 0 <= soc_min < soc_max <= 1, got [{}, {}]",
                self.soc_min, self.soc_max
            ));
        }
        if !(self.soc_min < self.soc0 && self.soc0 < self.soc_max) {
            return bad(format!(
                "initial soc {} must lie strictly inside [{}, {}]",
                self.soc0, self.soc_min, self.soc_max
            ));
        }
        Ok(())
    }
}

/// `Σ Φ(depth)` over every half cycle; a full cycle contributes `2·Φ(d)`.
pub fn cycle_cost(profile: &SocProfile, model: &StressModel) -> f64 {
    cost_of_cycles(&count_cycles(profile), model)
}

pub fn cycle_cost_raw(s: &[f64], model: &StressModel) -> f64 {
    cost_of_cycles(&count_cycles_raw(s), model)
}

pub fn cost_of_cycles(cycles: &CycleSet, model: &StressModel) -> f64 {
    cycles.half_cycles.iter().map(|h| model.phi(h.depth)).sum()
}

/// Alternative total that counts each full cycle once, as classic rainflow
/// tables list it. Reported for auditing only.
pub fn cost_full_cycles_once(cycles: &CycleSet, model: &StressModel) -> f64 {
    cycles
        .half_cycles
        .iter()
        .enumerate()
        .filter(|(i, h)| !(h.kind == CycleKind::FullMember && h.partner.is_some_and(|p| p < *i)))
        .map(|(_, h)| model.phi(h.depth))
        .sum()
}

pub fn degradation_cost_dollars(profile: &SocProfile, model: &StressModel, params: &BatteryParams) -> f64 {
    params.replacement_cost() * cycle_cost(profile, model)
}

/// Expected service life in months when degradation costs
/// `annual_cost` dollars per year.
pub fn expected_lifetime(annual_cost: f64, params: &BatteryParams) -> Result<f64> {
    lifetime_months(annual_cost, params.replacement_cost())
}

pub fn lifetime_months(annual_cost: f64, replacement_cost: f64) -> Result<f64> {
    if !(annual_cost.is_finite() && annual_cost > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "annual degradation cost must be positive, got {annual_cost}"
        )));
    }
    Ok(12.0 * replacement_cost / annual_cost)
}

/// Cycle cost of a raw SoC sequence together with its gradient with respect
/// to every sample, valid wherever the cycle structure is locally fixed.
///
/// Each half cycle's depth is `s[upper] − s[lower]`, so it pushes `+Φ'(d)` onto
/// its upper sample and `−Φ'(d)` onto its lower sample.
pub fn cost_and_soc_gradient(s: &[f64], model: &StressModel) -> (f64, Vec<f64>, CycleSet) {
    let cycles = count_cycles_raw(s);
    let mut grad = vec![0.0; s.len()];
    let mut cost = 0.0;
    for h in &cycles.half_cycles {
        cost += model.phi(h.depth);
        let slope = model.phi_prime(h.depth);
        grad[h.upper] += slope;
        grad[h.lower] -= slope;
    }
    (cost, grad, cycles)
}
