//! Rainflow cycle-based battery degradation cost and degradation-aware
//! dispatch of battery storage in a frequency-regulation market.
//!
//! * [`rainflow`] counts cycles in SoC histories and maps them to power intervals.
//! * [`degradation`] holds the depth-of-discharge stress models and the cost functional.
//! * [`solver`] solves the log-barrier dispatch problem by subgradient descent.
//! * [`market`] models the regulation market, benchmark policies and economics.
//! * [`oracle`] contains brute-force and property checks used to validate the rest.
//! * [`io`] and [`config`] read and write the file formats used by the CLI.

pub mod config;
pub mod degradation;
pub mod error;
pub mod io;
pub mod market;
pub mod oracle;
pub mod rainflow;
pub mod solver;

pub use degradation::{BatteryParams, StressModel};
pub use error::{Error, Result};
pub use market::{EconomicsReport, MarketParams, RegulationSignal};
pub use rainflow::{CycleSet, HalfCycle, SocProfile};
pub use solver::{DispatchProblem, Solution, SolverConfig};
