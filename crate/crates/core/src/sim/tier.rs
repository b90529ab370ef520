//! Tier service model.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::dispatch::Tier;
use crate::error::{Error, Result};

/// Cores of the reference tier; a tier with this many cores serves in `base_service_ms`.
pub const REFERENCE_CORES: f64 = 8.0;

/// Exponential up-times followed by fixed-length restarts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartProcess {
    pub mean_up_s: f64,
    pub down_s: f64,
}

/// Half-open interval `[start_s, end_s)` of virtual time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }
}

/// Arrivals inside the window fail immediately with probability `error_prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub error_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierModel {
    pub tier: Tier,
    pub capacity_cores: f64,
    pub base_service_ms: f64,
    /// Sigma of the multiplicative lognormal jitter; 0 disables jitter.
    #[serde(default)]
    pub service_jitter: f64,
    /// Parallel service slots; defaults to `capacity_cores` rounded.
    #[serde(default)]
    pub concurrency_limit: Option<usize>,
    pub queue_capacity: usize,
    #[serde(default)]
    pub restart: Option<RestartProcess>,
    /// Scheduled down periods, in addition to any restart process.
    #[serde(default)]
    pub outages: Vec<Interval>,
    #[serde(default)]
    pub faults: Vec<FaultWindow>,
}

impl TierModel {
    pub fn new(tier: Tier, capacity_cores: f64, base_service_ms: f64, queue_capacity: usize) -> Self {
        Self {
            tier,
            capacity_cores,
            base_service_ms,
            service_jitter: 0.0,
            concurrency_limit: None,
            queue_capacity,
            restart: None,
            outages: Vec::new(),
            faults: Vec::new(),
        }
    }

    pub fn slots(&self) -> usize {
        self.concurrency_limit
            .unwrap_or_else(|| self.capacity_cores.round().max(1.0) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.tier;
        let fail = |m: String| Err(Error::Config(format!("tier {name}: {m}")));
        if !(self.capacity_cores > 0.0 && self.capacity_cores.is_finite()) {
            return fail("capacity_cores must be > 0".into());
        }
        if !(self.base_service_ms > 0.0 && self.base_service_ms.is_finite()) {
            return fail("base_service_ms must be > 0".into());
        }
        if !(self.service_jitter >= 0.0 && self.service_jitter.is_finite()) {
            return fail("service_jitter must be >= 0".into());
        }
        if self.slots() == 0 {
            return fail("concurrency_limit must be >= 1".into());
        }
        if let Some(r) = self.restart {
            if !(r.mean_up_s > 0.0 && r.down_s > 0.0) {
                return fail("restart times must be > 0".into());
            }
        }
        for o in &self.outages {
            if !(o.start_s >= 0.0 && o.end_s > o.start_s) {
                return fail(format!("bad outage [{}, {})", o.start_s, o.end_s));
            }
        }
        for f in &self.faults {
            if !(f.start_s >= 0.0 && f.end_s > f.start_s && (0.0..=1.0).contains(&f.error_prob)) {
                return fail(format!("bad fault window [{}, {})", f.start_s, f.end_s));
            }
        }
        Ok(())
    }

    /// Mean service time with jitter off.
    pub fn nominal_service_ms(&self) -> f64 {
        self.base_service_ms * REFERENCE_CORES / self.capacity_cores
    }

    pub fn fault_probability(&self, t: f64) -> f64 {
        self.faults
            .iter()
            .filter(|f| t >= f.start_s && t < f.end_s)
            .map(|f| f.error_prob)
            .fold(0.0, f64::max)
    }
}

/// `base * (8 / cores) * LogNormal(0, sigma)`, in milliseconds.
pub fn service_time<R: Rng + ?Sized>(tier: &TierModel, rng: &mut R) -> f64 {
    let nominal = tier.nominal_service_ms();
    if tier.service_jitter == 0.0 {
        nominal
    } else {
        let jitter = LogNormal::new(0.0, tier.service_jitter).expect("validated sigma");
        nominal * jitter.sample(rng)
    }
}
