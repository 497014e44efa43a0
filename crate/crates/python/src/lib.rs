//! Python bindings: `import cyclecost`.
//!
//! Sequences cross the boundary as lists of floats. Battery, market and solver
//! settings come from an optional run configuration in JSON, the same format
//! the command-line tool reads; without one the regulation case study is used.

use cyclecost_core::config::{RunConfig, SignalSource};
use cyclecost_core::degradation::{cycle_cost_raw, lifetime_months as core_lifetime};
use cyclecost_core::market::{annualize, policy_follow as core_follow, EconomicsReport as CoreReport};
use cyclecost_core::oracle::{run_suite, Suite};
use cyclecost_core::rainflow::{count_cycles_raw, CycleKind, Direction};
use cyclecost_core::solver::{solve as core_solve, DispatchProblem};
use cyclecost_core::{Error, RegulationSignal, StressModel as CoreModel};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible(_) | Error::NotInterior(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn config(json: Option<&str>) -> PyResult<RunConfig> {
    let cfg = match json {
        Some(text) => RunConfig::from_json_str(text).map_err(to_py)?,
        None => RunConfig::default(),
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

fn problem(signal: Vec<f64>, model: Option<&StressModel>, json: Option<&str>) -> PyResult<DispatchProblem> {
    let cfg = config(json)?;
    let p = DispatchProblem {
        battery: cfg.battery_params(),
        model: match model {
            Some(m) => m.inner,
            None => cfg.stress_model().map_err(to_py)?,
        },
        market: cfg.market.clone(),
        signal: RegulationSignal::new(signal).map_err(to_py)?,
    };
    p.validate().map_err(to_py)?;
    Ok(p)
}

/// Cycle depth stress function.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct StressModel {
    inner: CoreModel,
}

#[pymethods]
impl StressModel {
    #[staticmethod]
    fn linear(k1: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreModel::linear(k1).map_err(to_py)? })
    }

    /// `k2 · d · exp(k3 · d)`.
    #[staticmethod]
    fn exponential(k2: f64, k3: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreModel::exponential(k2, k3).map_err(to_py)? })
    }

    /// `k4 · d^k5`, convex only for `k5 ≥ 1`.
    #[staticmethod]
    fn polynomial(k4: f64, k5: f64) -> PyResult<Self> {
        Ok(Self { inner: CoreModel::polynomial(k4, k5).map_err(to_py)? })
    }

    /// Lithium-ion reference model, `4.5e-4 · d^1.3`.
    #[staticmethod]
    fn reference() -> Self {
        Self { inner: CoreModel::reference() }
    }

    fn phi(&self, depth: f64) -> PyResult<f64> {
        self.inner.stress(depth).map_err(to_py)
    }

    fn phi_prime(&self, depth: f64) -> PyResult<f64> {
        self.inner.derivative(depth).map_err(to_py)
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant_name()
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients()
    }

    fn __repr__(&self) -> String {
        format!("StressModel.{}({:?})", self.inner.variant_name(), self.inner.coefficients())
    }
}

/// One rainflow half cycle.
#[pyclass(frozen, get_all)]
struct HalfCycle {
    depth: f64,
    direction: &'static str,
    kind: &'static str,
    intervals: Vec<usize>,
    junction_intervals: Vec<usize>,
}

#[pymethods]
impl HalfCycle {
    fn __repr__(&self) -> String {
        format!("HalfCycle(depth={}, direction='{}', kind='{}')", self.depth, self.direction, self.kind)
    }
}

fn check_soc(soc: &[f64]) -> PyResult<()> {
    if let Some((i, v)) = soc.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(PyValueError::new_err(format!("soc[{i}] = {v} is not finite")));
    }
    Ok(())
}

/// Half cycles of an SoC profile, in the order they are extracted.
#[pyfunction]
fn count_cycles(soc: Vec<f64>) -> PyResult<Vec<HalfCycle>> {
    check_soc(&soc)?;
    let cs = count_cycles_raw(&soc);
    Ok(cs
        .half_cycles
        .iter()
        .map(|h| HalfCycle {
            depth: h.depth,
            direction: match h.direction {
                Direction::Charge => "charge",
                Direction::Discharge => "discharge",
            },
            kind: match h.kind {
                CycleKind::Half => "half",
                CycleKind::FullMember => "full-member",
            },
            intervals: h.intervals().collect(),
            junction_intervals: h.junction_intervals.clone(),
        })
        .collect())
}

/// Fractional life loss of an SoC profile, summed over half cycles.
#[pyfunction]
#[pyo3(signature = (soc, model=None))]
fn cycle_cost(soc: Vec<f64>, model: Option<StressModel>) -> PyResult<f64> {
    check_soc(&soc)?;
    Ok(cycle_cost_raw(&soc, &model.map_or(CoreModel::reference(), |m| m.inner)))
}

/// Months until the accumulated cost reaches the replacement cost.
#[pyfunction]
#[pyo3(signature = (annual_cost, replacement_cost=150_000.0))]
fn lifetime_months(annual_cost: f64, replacement_cost: f64) -> PyResult<f64> {
    core_lifetime(annual_cost, replacement_cost).map_err(to_py)
}

/// Synthetic regulation signal of the configured generator.
#[pyfunction]
#[pyo3(signature = (seed, horizon, config=None))]
fn generate_signal(seed: u64, horizon: usize, config: Option<&str>) -> PyResult<Vec<f64>> {
    let mut cfg = self::config(config)?;
    cfg.seed = seed;
    // a file source in the config falls back to the default generator
    cfg.signal = match cfg.signal {
        SignalSource::Generator { correlation, innovation_std, reference_step_seconds, .. } => {
            SignalSource::Generator { horizon, correlation, innovation_std, reference_step_seconds }
        }
        SignalSource::File { .. } => match SignalSource::default() {
            SignalSource::Generator { correlation, innovation_std, reference_step_seconds, .. } => {
                SignalSource::Generator { horizon, correlation, innovation_std, reference_step_seconds }
            }
            other => other,
        },
    };
    Ok(cfg.load_signal().map_err(to_py)?.values().to_vec())
}

/// Degradation-aware dispatch for `signal`.
///
/// Returns a dict with `charge`, `discharge`, `soc`, `objective` (the
/// minimized `−revenue + degradation`), `utility`, `revenue`,
/// `degradation_cost`, `iterations`, `converged` and `gap_bound`.
#[pyfunction]
#[pyo3(signature = (signal, model=None, config=None, inner_iters=None))]
fn solve<'py>(
    py: Python<'py>,
    signal: Vec<f64>,
    model: Option<StressModel>,
    config: Option<&str>,
    inner_iters: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = problem(signal, model.as_ref(), config)?;
    let mut solver = self::config(config)?.solver;
    if let Some(n) = inner_iters {
        solver.inner_iters = n;
    }
    let sol = py.detach(|| core_solve(&p, &solver)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("utility", sol.utility())?;
    d.set_item("charge", sol.charge)?;
    d.set_item("discharge", sol.discharge)?;
    d.set_item("soc", sol.soc)?;
    d.set_item("objective", sol.u_best)?;
    d.set_item("revenue", sol.revenue)?;
    d.set_item("degradation_cost", sol.degradation_cost)?;
    d.set_item("iterations", sol.iterations)?;
    d.set_item("converged", sol.converged)?;
    d.set_item("gap_bound", sol.gap_bound)?;
    Ok(d)
}

/// Greedy signal following, clipped at the power and SoC limits.
#[pyfunction]
#[pyo3(signature = (signal, config=None))]
fn policy_follow(signal: Vec<f64>, config: Option<&str>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = problem(signal, None, config)?;
    Ok(core_follow(&p.signal, &p.battery, p.market.capacity_mw))
}

fn report_dict<'py>(py: Python<'py>, r: &CoreReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("horizon_hours", r.horizon_hours)?;
    d.set_item("capacity_payment", r.capacity_payment)?;
    d.set_item("mismatch_penalty", r.mismatch_penalty)?;
    d.set_item("regulation_service_payment", r.regulation_service_payment)?;
    d.set_item("modeled_battery_degradation", r.modeled_battery_degradation)?;
    d.set_item("actual_battery_degradation", r.actual_battery_degradation)?;
    d.set_item("total_regulation_utility", r.total_regulation_utility)?;
    d.set_item("battery_life_expectancy_months", r.battery_life_expectancy_months)?;
    Ok(d)
}

/// Scores a dispatch with the reference model. Returns `(horizon, annual)`
/// economics dicts. `modeled` is the model the policy believed in, if any.
#[pyfunction]
#[pyo3(signature = (charge, discharge, signal, modeled=None, config=None))]
fn assess<'py>(
    py: Python<'py>,
    charge: Vec<f64>,
    discharge: Vec<f64>,
    signal: Vec<f64>,
    modeled: Option<StressModel>,
    config: Option<&str>,
) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
    let p = problem(signal, None, config)?;
    let report = CoreReport::assess(
        &charge,
        &discharge,
        &p.battery,
        &p.market,
        &p.signal,
        modeled.as_ref().map(|m| &m.inner),
        &p.model,
    )
    .map_err(to_py)?;
    let annual = annualize(&report).map_err(to_py)?;
    Ok((report_dict(py, &report)?, report_dict(py, &annual)?))
}

/// Runs an oracle suite and returns one dict per property.
#[pyfunction]
#[pyo3(signature = (suite="all", seed=0, samples=1000))]
fn verify<'py>(py: Python<'py>, suite: &str, seed: u64, samples: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let suite: Suite = suite.parse().map_err(to_py)?;
    let reports = py.detach(|| run_suite(suite, seed, samples)).map_err(to_py)?;
    reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("property", &r.property)?;
            d.set_item("model", r.model.clone())?;
            d.set_item("samples", r.samples)?;
            d.set_item("skipped", r.skipped)?;
            d.set_item("violations", r.violations)?;
            d.set_item("max_excess", r.max_excess)?;
            d.set_item("passed", r.passed())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn cyclecost(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<StressModel>()?;
    m.add_class::<HalfCycle>()?;
    m.add_function(wrap_pyfunction!(count_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_cost, m)?)?;
    m.add_function(wrap_pyfunction!(lifetime_months, m)?)?;
    m.add_function(wrap_pyfunction!(generate_signal, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(policy_follow, m)?)?;
    m.add_function(wrap_pyfunction!(assess, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
