//! Discrete-event simulator of a multipath TCP connection.
//!
//! A connection stripes one byte stream over several subflows, each running
//! over its own point-to-point link pair. Subflow windows are coupled by one
//! of several increase rules, and an optional detector undoes congestion
//! responses to retransmissions that turn out to have been unnecessary.
//!
//! ```
//! use mpsim::harness::{run_scenario, ScenarioConfig};
//!
//! let mut cfg = ScenarioConfig::preset("paper-base").unwrap();
//! cfg.transfer_size = 100_000;
//! let out = run_scenario(&cfg);
//! assert!(out.stats.completed() && out.stats.integrity_ok());
//! ```

pub mod connection;
pub mod coupling;
pub mod harness;
pub mod netmodel;
pub mod simkernel;
pub mod spurious;
pub mod subflow;

pub use coupling::CouplingMode;
pub use harness::{load_scenario, run_scenario, run_sweep, RunOutput, ScenarioConfig, SummaryStats, TraceRecord};
pub use netmodel::LinkConfig;
pub use simkernel::SimTime;
pub use spurious::DetectorChoice;
