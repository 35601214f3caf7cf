use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::{run_scenario, ScenarioConfig, ScenarioError, SummaryStats};
use crate::simkernel::{mix64, SPLITMIX_GAMMA};

/// Link characteristic varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    /// Values in Mbit/s.
    Capacity,
    /// One-way delay, values in ms.
    Latency,
    /// Values are probabilities in [0, 1].
    LossRate,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Capacity => "capacity",
            SweepParam::Latency => "latency",
            SweepParam::LossRate => "loss",
        }
    }

    /// The grid used when no values are given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::Capacity => vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            SweepParam::Latency => vec![0.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0],
            SweepParam::LossRate => vec![0.0, 0.01, 0.02, 0.05, 0.10],
        }
    }

    fn field(self) -> &'static str {
        match self {
            SweepParam::Capacity => "capacity_mbps",
            SweepParam::Latency => "delay_ms",
            SweepParam::LossRate => "loss_rate",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "capacity" => Ok(SweepParam::Capacity),
            "latency" | "delay" => Ok(SweepParam::Latency),
            "loss" | "loss_rate" | "lossrate" => Ok(SweepParam::LossRate),
            other => Err(format!("unknown sweep parameter {other:?} (expected capacity, latency or loss)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    /// 0-based index into the scenario's links.
    pub link: usize,
    pub values: Vec<f64>,
}

#[derive(Debug)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub seed: u64,
    pub result: Result<SummaryStats, ScenarioError>,
}

/// Seed for point `index`: the base seed xor-ed with a golden-ratio multiple
/// of `index + 1`, passed through the splitmix64 finalizer.
pub fn point_seed(base: u64, index: usize) -> u64 {
    mix64(base ^ (index as u64 + 1).wrapping_mul(SPLITMIX_GAMMA))
}

impl SweepSpec {
    pub fn validate(&self, base: &ScenarioConfig) -> Result<(), ScenarioError> {
        let field = format!("link{}.{}", self.link + 1, self.parameter.field());
        if self.link >= base.links.len() {
            return Err(ScenarioError::Invalid {
                field,
                line: None,
                message: format!("scenario has only {} link(s)", base.links.len()),
            });
        }
        if self.values.is_empty() {
            return Err(ScenarioError::Invalid {
                field,
                line: None,
                message: "sweep needs at least one value".into(),
            });
        }
        Ok(())
    }

    /// The base config with point `index` applied.
    pub fn point_config(&self, base: &ScenarioConfig, index: usize) -> ScenarioConfig {
        let mut cfg = base.clone();
        let value = self.values[index];
        let link = &mut cfg.links[self.link];
        match self.parameter {
            SweepParam::Capacity => link.capacity_bps = value * 1e6,
            SweepParam::Latency => link.one_way_delay = value / 1e3,
            SweepParam::LossRate => link.loss_rate = value,
        }
        cfg.seed = point_seed(base.seed, index);
        cfg
    }
}

/// Runs every point in parallel. A point whose config is invalid gets an
/// error row; the others still run. Rows come back in value order.
pub fn run_sweep(base: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>, ScenarioError> {
    spec.validate(base)?;
    let rows = (0..spec.values.len())
        .into_par_iter()
        .map(|index| {
            let cfg = spec.point_config(base, index);
            let result = cfg.validate().map(|()| run_scenario(&cfg).stats);
            SweepRow {
                index,
                value: spec.values[index],
                seed: cfg.seed,
                result,
            }
        })
        .collect();
    Ok(rows)
}
