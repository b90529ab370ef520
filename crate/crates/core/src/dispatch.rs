//! Weighted tier selection and per-request bookkeeping.
//!
//! The transport itself lives with the caller: [`Dispatcher::begin`] picks a tier and
//! takes an in-flight slot, the caller forwards the request, and
//! [`Dispatcher::finish`] turns the transport result into a [`RequestOutcome`].

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::efe::sample_index;
use crate::model::Weights;
use crate::observe::{MetricWindow, RequestOutcome, Status};

pub const DEFAULT_TIMEOUT_MS: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Light,
    Medium,
    Heavy,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Light, Tier::Medium, Tier::Heavy];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Light => "light",
            Tier::Medium => "medium",
            Tier::Heavy => "heavy",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "light" => Ok(Tier::Light),
            "medium" => Ok(Tier::Medium),
            "heavy" => Ok(Tier::Heavy),
            other => Err(Error::Config(format!("unknown tier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightSnapshot {
    pub weights: Weights,
    pub epoch: u64,
}

/// Samples a tier with probability equal to its weight.
pub fn choose_tier<R: Rng + ?Sized>(w: &Weights, rng: &mut R) -> Tier {
    Tier::ALL[sample_index(&w.as_array(), rng)]
}

/// Current routing weights, replaced atomically.
#[derive(Debug)]
pub struct SharedWeights {
    inner: RwLock<WeightSnapshot>,
}

impl SharedWeights {
    pub fn new(weights: Weights) -> Self {
        Self {
            inner: RwLock::new(WeightSnapshot { weights, epoch: 0 }),
        }
    }

    pub fn load(&self) -> WeightSnapshot {
        *self.inner.read().expect("weights lock poisoned")
    }

    /// Installs new weights and returns the new epoch.
    pub fn publish(&self, weights: Weights) -> u64 {
        let mut g = self.inner.write().expect("weights lock poisoned");
        g.weights = weights;
        g.epoch += 1;
        g.epoch
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Url(String),
    Simulated,
}

#[derive(Debug)]
pub struct TierEndpoint {
    pub tier: Tier,
    pub target: Target,
    pub timeout_ms: f64,
    in_flight: AtomicUsize,
}

impl TierEndpoint {
    pub fn new(tier: Tier, target: Target, timeout_ms: f64) -> Self {
        Self {
            tier,
            target,
            timeout_ms,
            in_flight: AtomicUsize::new(0),
        }
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::Acquire)
    }
}

/// Transport-level result of forwarding one request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardResult {
    /// Backend answered; `ok` is false for non-success statuses.
    Response { ok: bool, latency_ms: f64 },
    /// Refused, reset or otherwise failed before a response.
    Failed,
    TimedOut,
}

impl ForwardResult {
    pub fn status(&self) -> Status {
        match self {
            ForwardResult::Response { ok: true, .. } => Status::Success,
            ForwardResult::Response { ok: false, .. } | ForwardResult::Failed => Status::Error,
            ForwardResult::TimedOut => Status::Timeout,
        }
    }
}

/// One dispatched request. Releases its in-flight slot exactly once, on finish or drop.
#[derive(Debug)]
pub struct Ticket {
    pub tier: Tier,
    pub epoch: u64,
    endpoints: Arc<[TierEndpoint; 3]>,
    released: bool,
}

impl Ticket {
    fn release(&mut self) {
        if !self.released {
            self.released = true;
            self.endpoints[self.tier.index()]
                .in_flight
                .fetch_sub(1, Ordering::AcqRel);
        }
    }
}

impl Drop for Ticket {
    fn drop(&mut self) {
        self.release();
    }
}

pub struct Dispatcher {
    weights: Arc<SharedWeights>,
    endpoints: Arc<[TierEndpoint; 3]>,
    window: Arc<Mutex<MetricWindow>>,
}

impl Dispatcher {
    pub fn new(weights: Arc<SharedWeights>, endpoints: [TierEndpoint; 3], window: Arc<Mutex<MetricWindow>>) -> Self {
        for (i, e) in endpoints.iter().enumerate() {
            assert_eq!(e.tier.index(), i, "endpoints must be ordered light, medium, heavy");
        }
        Self {
            weights,
            endpoints: Arc::new(endpoints),
            window,
        }
    }

    pub fn endpoint(&self, tier: Tier) -> &TierEndpoint {
        &self.endpoints[tier.index()]
    }

    /// Total in-flight requests across tiers.
    pub fn in_flight(&self) -> usize {
        self.endpoints.iter().map(TierEndpoint::in_flight).sum()
    }

    pub fn begin<R: Rng + ?Sized>(&self, rng: &mut R) -> Ticket {
        let snap = self.weights.load();
        let tier = choose_tier(&snap.weights, rng);
        self.endpoints[tier.index()]
            .in_flight
            .fetch_add(1, Ordering::AcqRel);
        Ticket {
            tier,
            epoch: snap.epoch,
            endpoints: Arc::clone(&self.endpoints),
            released: false,
        }
    }

    /// Records the outcome and releases the ticket's slot.
    pub fn finish(&self, mut ticket: Ticket, result: ForwardResult, now: f64) -> RequestOutcome {
        ticket.release();
        let outcome = match result {
            ForwardResult::Response { ok: true, latency_ms } => {
                RequestOutcome::success(now, ticket.tier, latency_ms)
            }
            other => RequestOutcome::failure(now, ticket.tier, other.status()),
        };
        self.window
            .lock()
            .expect("metric window lock poisoned")
            .push(outcome);
        outcome
    }
}
