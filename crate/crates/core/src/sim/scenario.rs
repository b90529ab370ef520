//! Scenario files: tier models, workload, timeouts and optional engine overrides, in TOML.
//!
//! ```toml
//! name = "edge-burst"
//! timeout_ms = 10000
//!
//! [workload]
//! pattern = "burst"
//! target_rps = 50
//!
//! [[tiers]]
//! tier = "light"
//! capacity_cores = 2
//! base_service_ms = 200
//! queue_capacity = 40
//! restart = { mean_up_s = 300, down_s = 30 }
//! ```
//!
//! `[engine]` and `[discretization]` tables, when present, override the defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tier::TierModel;
use super::workload::WorkloadSpec;
use crate::dispatch::{Tier, DEFAULT_TIMEOUT_MS};
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::observe::DiscretizationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: f64,
    /// Width of the sliding metric window, seconds.
    #[serde(default = "default_window")]
    pub metric_window_s: f64,
    /// Utilization poll period, seconds.
    #[serde(default = "default_window")]
    pub util_poll_s: f64,
    pub workload: WorkloadSpec,
    pub tiers: Vec<TierModel>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_MS
}
fn default_window() -> f64 {
    10.0
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let wrap = |source: Box<dyn std::error::Error + Send + Sync>| Error::Scenario {
            path: path.to_path_buf(),
            source,
        };
        let text = std::fs::read_to_string(path).map_err(|e| wrap(Box::new(e)))?;
        let scenario = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => wrap(m.into()),
            other => wrap(Box::new(other)),
        })?;
        Ok(scenario)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_ms > 0.0 && self.timeout_ms.is_finite()) {
            return Err(Error::Config("timeout_ms must be > 0".into()));
        }
        if !(self.metric_window_s > 0.0 && self.util_poll_s > 0.0) {
            return Err(Error::Config("metric_window_s and util_poll_s must be > 0".into()));
        }
        self.workload.validate()?;
        order_tiers(self.tiers.clone())?;
        self.engine.validate()?;
        self.discretization.validate()
    }

    pub fn tier(&self, tier: Tier) -> Option<&TierModel> {
        self.tiers.iter().find(|t| t.tier == tier)
    }
}

/// Validates and sorts tier models into light, medium, heavy order.
pub fn order_tiers(tiers: Vec<TierModel>) -> Result<[TierModel; 3]> {
    for t in &tiers {
        t.validate()?;
    }
    let mut slots: [Option<TierModel>; 3] = [None, None, None];
    for t in tiers {
        let i = t.tier.index();
        if slots[i].is_some() {
            return Err(Error::Config(format!("tier {} defined twice", t.tier)));
        }
        slots[i] = Some(t);
    }
    let missing: Vec<&str> = Tier::ALL
        .iter()
        .filter(|t| slots[t.index()].is_none())
        .map(|t| t.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing tiers: {}", missing.join(", "))));
    }
    Ok(slots.map(|t| t.expect("checked above")))
}
