//! Windowed request metrics and their discretization into observations.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dispatch::Tier;
use crate::error::{Error, Result};
use crate::space::ObservationTuple;

pub const DEFAULT_WINDOW_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Success,
    Error,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    /// Completion time, seconds on the run's monotonic clock.
    pub timestamp: f64,
    pub tier: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    pub status: Status,
}

impl RequestOutcome {
    pub fn success(timestamp: f64, tier: Tier, latency_ms: f64) -> Self {
        Self {
            timestamp,
            tier,
            latency_ms: Some(latency_ms),
            status: Status::Success,
        }
    }

    pub fn failure(timestamp: f64, tier: Tier, status: Status) -> Self {
        debug_assert_ne!(status, Status::Success);
        Self {
            timestamp,
            tier,
            latency_ms: None,
            status,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == Status::Success
    }
}

/// Nearest-rank percentile of an ascending slice: the `ceil(pct/100 * n)`-th smallest value.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100).clamp(1, n);
    Some(sorted[rank - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WindowStats {
    pub p95_ms: f64,
    pub rate_rps: f64,
    pub queue_depth: f64,
    pub error_rate: f64,
}

/// Sliding window over `(now - duration, now]`.
#[derive(Debug, Clone)]
pub struct MetricWindow {
    duration: f64,
    samples: VecDeque<RequestOutcome>,
}

impl Default for MetricWindow {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW_S)
    }
}

impl MetricWindow {
    pub fn new(duration: f64) -> Self {
        assert!(duration > 0.0, "window duration must be positive");
        Self {
            duration,
            samples: VecDeque::new(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Inserts in timestamp order; late arrivals are placed, not appended.
    pub fn push(&mut self, outcome: RequestOutcome) {
        match self.samples.back() {
            Some(last) if last.timestamp > outcome.timestamp => {
                let at = self.samples.partition_point(|s| s.timestamp <= outcome.timestamp);
                self.samples.insert(at, outcome);
            }
            _ => self.samples.push_back(outcome),
        }
    }

    pub fn evict(&mut self, now: f64) {
        let cutoff = now - self.duration;
        while self.samples.front().is_some_and(|s| s.timestamp <= cutoff) {
            self.samples.pop_front();
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = &RequestOutcome> {
        self.samples.iter()
    }

    /// Evicts stale samples, then derives P95 (successes only), rate and error rate.
    /// `queue_depth` is the dispatcher's instantaneous in-flight count.
    pub fn stats(&mut self, now: f64, queue_depth: usize) -> WindowStats {
        self.evict(now);
        let total = self.samples.len();
        if total == 0 {
            return WindowStats {
                queue_depth: queue_depth as f64,
                ..WindowStats::default()
            };
        }
        let mut latencies: Vec<f64> = self.samples.iter().filter_map(|s| s.latency_ms).collect();
        latencies.sort_by(f64::total_cmp);
        let failures = self.samples.iter().filter(|s| !s.is_success()).count();
        WindowStats {
            p95_ms: nearest_rank(&latencies, 95).unwrap_or(0.0),
            rate_rps: total as f64 / self.duration,
            queue_depth: queue_depth as f64,
            error_rate: failures as f64 / total.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscretizationConfig {
    pub latency_thresholds_ms: (f64, f64),
    pub rate_thresholds_rps: (f64, f64),
    pub queue_thresholds: (f64, f64),
    pub error_threshold: f64,
    pub utilization_thresholds: (f64, f64),
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            latency_thresholds_ms: (500.0, 2000.0),
            rate_thresholds_rps: (20.0, 40.0),
            queue_thresholds: (10.0, 50.0),
            error_threshold: 0.10,
            utilization_thresholds: (0.4, 0.8),
        }
    }
}

impl DiscretizationConfig {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("latency", self.latency_thresholds_ms),
            ("rate", self.rate_thresholds_rps),
            ("queue", self.queue_thresholds),
            ("utilization", self.utilization_thresholds),
        ];
        for (name, (lo, hi)) in pairs {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "{name} thresholds must be strictly increasing, got ({lo}, {hi})"
                )));
            }
        }
        if !self.error_threshold.is_finite() {
            return Err(Error::Config("error threshold must be finite".into()));
        }
        Ok(())
    }
}

fn bin3(value: f64, (t1, t2): (f64, f64)) -> u8 {
    if value < t1 {
        0
    } else if value < t2 {
        1
    } else {
        2
    }
}

pub fn discretize(stats: &WindowStats, cfg: &DiscretizationConfig) -> ObservationTuple {
    ObservationTuple {
        latency_bin: bin3(stats.p95_ms, cfg.latency_thresholds_ms),
        rate_bin: bin3(stats.rate_rps, cfg.rate_thresholds_rps),
        queue_bin: bin3(stats.queue_depth, cfg.queue_thresholds),
        error_bin: u8::from(stats.error_rate >= cfg.error_threshold),
    }
}

/// Idle / moderate / saturated.
pub fn discretize_utilization(u: f64, cfg: &DiscretizationConfig) -> u8 {
    bin3(u, cfg.utilization_thresholds)
}

/// Per-tier CPU utilization fractions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierUtilization {
    pub light: f64,
    pub medium: f64,
    pub heavy: f64,
}

impl TierUtilization {
    pub fn validate(&self) -> Result<()> {
        for (name, u) in [("light", self.light), ("medium", self.medium), ("heavy", self.heavy)] {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::Config(format!("{name} utilization {u} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Parses the metrics endpoint body, e.g. `{"light":0.42,"medium":0.77,"heavy":0.21}`.
    pub fn from_json(body: &str) -> Result<Self> {
        let u: Self = serde_json::from_str(body)?;
        u.validate()?;
        Ok(u)
    }

    pub fn discretize(&self, cfg: &DiscretizationConfig) -> UtilizationLevels {
        UtilizationLevels {
            light: discretize_utilization(self.light, cfg),
            medium: discretize_utilization(self.medium, cfg),
            heavy: discretize_utilization(self.heavy, cfg),
        }
    }
}

/// Per-tier utilization ordinals in `{0, 1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UtilizationLevels {
    pub light: u8,
    pub medium: u8,
    pub heavy: u8,
}

/// Source of per-tier utilization readings.
pub trait UtilizationSource {
    fn poll(&mut self) -> Result<TierUtilization>;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(t: f64, ms: f64) -> RequestOutcome {
        RequestOutcome::success(t, Tier::Heavy, ms)
    }

    #[test]
    fn p95_of_one_to_hundred() {
        let mut w = MetricWindow::default();
        for i in 1..=100 {
            w.push(ok(5.0, i as f64));
        }
        let s = w.stats(5.0, 3);
        assert_eq!(s.p95_ms, 95.0);
        assert_eq!(s.rate_rps, 10.0);
        assert_eq!(s.queue_depth, 3.0);
        assert_eq!(s.error_rate, 0.0);
    }

    #[test]
    fn empty_window() {
        let mut w = MetricWindow::default();
        assert_eq!(
            w.stats(100.0, 7),
            WindowStats {
                p95_ms: 0.0,
                rate_rps: 0.0,
                queue_depth: 7.0,
                error_rate: 0.0
            }
        );
    }

    #[test]
    fn error_rate_counts_errors_and_timeouts() {
        let mut w = MetricWindow::default();
        for i in 0..8 {
            w.push(ok(1.0 + i as f64 * 0.1, 10.0));
        }
        w.push(RequestOutcome::failure(2.0, Tier::Light, Status::Error));
        w.push(RequestOutcome::failure(2.1, Tier::Light, Status::Timeout));
        assert!((w.stats(2.5, 0).error_rate - 0.2).abs() < 1e-15);
    }

    #[test]
    fn eviction_drops_old_samples() {
        let mut w = MetricWindow::new(10.0);
        w.push(ok(1.0, 5000.0));
        w.push(ok(10.5, 10.0));
        let s = w.stats(11.0, 0);
        assert_eq!(w.len(), 1);
        assert_eq!(s.p95_ms, 10.0);
        // exactly `duration` old is outside the half-open window
        w.push(ok(12.0, 1.0));
        w.stats(20.5, 0);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn out_of_order_push_is_sorted() {
        let mut w = MetricWindow::default();
        w.push(ok(3.0, 1.0));
        w.push(ok(1.0, 2.0));
        w.push(ok(2.0, 3.0));
        let ts: Vec<f64> = w.samples().map(|s| s.timestamp).collect();
        assert_eq!(ts, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn nearest_rank_edges() {
        assert_eq!(nearest_rank(&[], 95), None);
        assert_eq!(nearest_rank(&[4.0], 95), Some(4.0));
        assert_eq!(nearest_rank(&[1.0, 2.0], 50), Some(1.0));
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0], 50), Some(2.0));
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0], 100), Some(3.0));
    }

    #[test]
    fn discretize_examples() {
        let cfg = DiscretizationConfig::default();
        let low = WindowStats {
            p95_ms: 100.0,
            rate_rps: 5.0,
            queue_depth: 0.0,
            error_rate: 0.0,
        };
        assert_eq!(discretize(&low, &cfg).bins(), [0, 0, 0, 0]);
        let high = WindowStats {
            p95_ms: 2500.0,
            rate_rps: 45.0,
            queue_depth: 80.0,
            error_rate: 0.20,
        };
        assert_eq!(discretize(&high, &cfg).bins(), [2, 2, 2, 1]);
        let edge = WindowStats {
            p95_ms: 500.0,
            ..low
        };
        assert_eq!(discretize(&edge, &cfg).latency_bin, 1);
    }

    #[test]
    fn utilization_bins() {
        let cfg = DiscretizationConfig::default();
        assert_eq!(discretize_utilization(0.10, &cfg), 0);
        assert_eq!(discretize_utilization(0.95, &cfg), 2);
        assert_eq!(discretize_utilization(0.40, &cfg), 1);
    }

    #[test]
    fn config_validation() {
        assert!(DiscretizationConfig::default().validate().is_ok());
        let bad = DiscretizationConfig {
            queue_thresholds: (50.0, 10.0),
            ..DiscretizationConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn utilization_json() {
        let u = TierUtilization::from_json(r#"{"light":0.42,"medium":0.77,"heavy":0.21}"#).unwrap();
        assert_eq!(u, TierUtilization { light: 0.42, medium: 0.77, heavy: 0.21 });
        assert!(TierUtilization::from_json(r#"{"light":1.42,"medium":0.77,"heavy":0.21}"#).is_err());
        assert!(TierUtilization::from_json(r#"{"light":0.4}"#).is_err());
        let levels = u.discretize(&DiscretizationConfig::default());
        assert_eq!((levels.light, levels.medium, levels.heavy), (1, 1, 0));
    }
}
