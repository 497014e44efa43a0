//! Run configuration shared by the command-line tool and the bindings.
//!
//! Configs are JSON or TOML (chosen by file extension). Every block is
//! optional and falls back to the regulation case study: a 1 MW / 0.25 MWh
//! battery committing 1 MW of regulation for 1800 four-second intervals.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degradation::{BatteryParams, StressModel};
use crate::error::{Error, Result};
use crate::io::read_signal_csv;
use crate::market::{generate_signal, MarketParams, RegulationSignal, SignalSpec};
use crate::solver::{DispatchProblem, SolverConfig};

/// Battery block. Same fields as [`BatteryParams`] except that the interval
/// length is given in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub energy_mwh: f64,
    pub power_mw: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc0: f64,
    pub interval_seconds: f64,
    pub cell_price_per_mwh: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self::from(&BatteryParams::regulation_default())
    }
}

impl From<&BatteryParams> for BatteryConfig {
    fn from(p: &BatteryParams) -> Self {
        Self {
            energy_mwh: p.energy_mwh,
            power_mw: p.power_mw,
            eta_c: p.eta_c,
            eta_d: p.eta_d,
            soc_min: p.soc_min,
            soc_max: p.soc_max,
            soc0: p.soc0,
            interval_seconds: p.interval_hours * 3600.0,
            cell_price_per_mwh: p.cell_price_per_mwh,
        }
    }
}

impl BatteryConfig {
    pub fn params(&self) -> BatteryParams {
        BatteryParams {
            energy_mwh: self.energy_mwh,
            power_mw: self.power_mw,
            eta_c: self.eta_c,
            eta_d: self.eta_d,
            soc_min: self.soc_min,
            soc_max: self.soc_max,
            soc0: self.soc0,
            interval_hours: self.interval_seconds / 3600.0,
            cell_price_per_mwh: self.cell_price_per_mwh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressConfig {
    pub variant: String,
    pub coefficients: Vec<f64>,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self::from(&StressModel::reference())
    }
}

impl From<&StressModel> for StressConfig {
    fn from(m: &StressModel) -> Self {
        Self { variant: m.variant_name().to_string(), coefficients: m.coefficients() }
    }
}

impl StressConfig {
    pub fn model(&self) -> Result<StressModel> {
        StressModel::from_parts(&self.variant, &self.coefficients)
    }
}

/// Where the regulation signal comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum SignalSource {
    /// `t,r` CSV. Relative paths are resolved against the config file.
    File { path: PathBuf },
    /// Seeded autoregressive signal of `horizon` samples.
    Generator {
        horizon: usize,
        #[serde(default = "default_correlation")]
        correlation: f64,
        #[serde(default = "default_innovation_std")]
        innovation_std: f64,
        #[serde(default = "default_reference_step")]
        reference_step_seconds: f64,
    },
}

fn default_correlation() -> f64 {
    SignalSpec::default().correlation
}

fn default_innovation_std() -> f64 {
    SignalSpec::default().innovation_std
}

fn default_reference_step() -> f64 {
    SignalSpec::default().reference_step_seconds
}

pub const DEFAULT_HORIZON: usize = 1800;

impl Default for SignalSource {
    fn default() -> Self {
        let spec = SignalSpec::default();
        SignalSource::Generator {
            horizon: DEFAULT_HORIZON,
            correlation: spec.correlation,
            innovation_std: spec.innovation_std,
            reference_step_seconds: spec.reference_step_seconds,
        }
    }
}

/// Linear-cost benchmark settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Slope of the throughput-linear stress model, life loss per unit of
    /// SoC moved.
    pub linear_k1: f64,
}

pub const DEFAULT_LINEAR_K1: f64 = 1.5e-4;

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { linear_k1: DEFAULT_LINEAR_K1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub battery: BatteryConfig,
    pub stress: StressConfig,
    pub market: MarketParams,
    pub solver: SolverConfig,
    pub signal: SignalSource,
    pub benchmark: BenchmarkConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            battery: BatteryConfig::default(),
            stress: StressConfig::default(),
            market: MarketParams::regulation_default(),
            solver: SolverConfig::default(),
            signal: SignalSource::default(),
            benchmark: BenchmarkConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    /// Reads, parses and validates a config file. `.toml` files are read as
    /// TOML, anything else as JSON.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
            Self::from_toml_str(&text)?
        } else {
            Self::from_json_str(&text)?
        };
        if let SignalSource::File { path: p } = &mut cfg.signal {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn battery_params(&self) -> BatteryParams {
        self.battery.params()
    }

    pub fn stress_model(&self) -> Result<StressModel> {
        self.stress.model()
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.battery_params();
        b.validate()?;
        self.stress_model()?;
        self.market.validate()?;
        self.solver.validate(&b)?;
        StressModel::linear(self.benchmark.linear_k1)?;
        match &self.signal {
            SignalSource::File { path } => {
                if !path.is_file() {
                    return Err(Error::Io(format!("signal file {} does not exist", path.display())));
                }
            }
            SignalSource::Generator { horizon, .. } => {
                if *horizon == 0 {
                    return Err(Error::InvalidParameter("signal horizon must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn load_signal(&self) -> Result<RegulationSignal> {
        match &self.signal {
            SignalSource::File { path } => {
                let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                read_signal_csv(f)
            }
            SignalSource::Generator { horizon, correlation, innovation_std, reference_step_seconds } => {
                let spec = SignalSpec {
                    correlation: *correlation,
                    innovation_std: *innovation_std,
                    reference_step_seconds: *reference_step_seconds,
                };
                generate_signal(self.seed, *horizon, self.battery_params().interval_hours, &spec)
            }
        }
    }

    pub fn problem(&self) -> Result<DispatchProblem> {
        let problem = DispatchProblem {
            battery: self.battery_params(),
            model: self.stress_model()?,
            market: self.market.clone(),
            signal: self.load_signal()?,
        };
        problem.validate()?;
        Ok(problem)
    }
}
