//! Arrival process: steady Poisson, or Poisson within on-phases of an on/off envelope.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Burst,
    Steady,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub pattern: Pattern,
    #[serde(default = "default_rps")]
    pub target_rps: f64,
    #[serde(default = "default_duration")]
    pub run_duration_s: f64,
    #[serde(default = "default_on")]
    pub burst_on_s: f64,
    #[serde(default = "default_off")]
    pub burst_off_s: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rps() -> f64 {
    50.0
}
fn default_duration() -> f64 {
    600.0
}
fn default_on() -> f64 {
    20.0
}
fn default_off() -> f64 {
    10.0
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            pattern: Pattern::Burst,
            target_rps: default_rps(),
            run_duration_s: default_duration(),
            burst_on_s: default_on(),
            burst_off_s: default_off(),
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_rps > 0.0 && self.target_rps.is_finite()) {
            return Err(Error::Config("target_rps must be > 0".into()));
        }
        if !(self.run_duration_s > 0.0 && self.run_duration_s.is_finite()) {
            return Err(Error::Config("run_duration_s must be > 0".into()));
        }
        if self.pattern == Pattern::Burst && !(self.burst_on_s > 0.0 && self.burst_off_s >= 0.0) {
            return Err(Error::Config("burst_on_s must be > 0 and burst_off_s >= 0".into()));
        }
        Ok(())
    }

    /// Arrival rate while in an on-phase.
    pub fn on_rate(&self) -> f64 {
        match self.pattern {
            Pattern::Steady => self.target_rps,
            Pattern::Burst => self.target_rps * (self.burst_on_s + self.burst_off_s) / self.burst_on_s,
        }
    }

    pub fn is_on(&self, t: f64) -> bool {
        match self.pattern {
            Pattern::Steady => true,
            Pattern::Burst => t.rem_euclid(self.burst_on_s + self.burst_off_s) < self.burst_on_s,
        }
    }
}

/// Sorted arrival times in `[0, run_duration_s)`.
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gap = Exp::new(spec.on_rate()).expect("validated positive rate");
    let phases: Vec<(f64, f64)> = match spec.pattern {
        Pattern::Steady => vec![(0.0, spec.run_duration_s)],
        Pattern::Burst => {
            let cycle = spec.burst_on_s + spec.burst_off_s;
            (0..)
                .map(|k| k as f64 * cycle)
                .take_while(|start| *start < spec.run_duration_s)
                .map(|start| (start, (start + spec.burst_on_s).min(spec.run_duration_s)))
                .collect()
        }
    };
    let mut out = Vec::with_capacity((spec.target_rps * spec.run_duration_s * 1.1) as usize);
    for (start, end) in phases {
        let mut t = start;
        loop {
            t += gap.sample(&mut rng);
            if t >= end {
                break;
            }
            out.push(t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_count_within_three_sigma() {
        let spec = WorkloadSpec {
            pattern: Pattern::Steady,
            target_rps: 50.0,
            run_duration_s: 60.0,
            seed: 11,
            ..WorkloadSpec::default()
        };
        let n = generate_workload(&spec).unwrap().len() as f64;
        // Poisson(3000): sigma = sqrt(3000) ≈ 54.8
        assert!((n - 3000.0).abs() <= 165.0, "{n}");
    }

    #[test]
    fn burst_off_phase_is_silent() {
        let spec = WorkloadSpec {
            run_duration_s: 300.0,
            seed: 2,
            ..WorkloadSpec::default()
        };
        let arrivals = generate_workload(&spec).unwrap();
        assert!(arrivals.iter().all(|&t| spec.is_on(t)));
        assert!(arrivals.iter().all(|&t| t.rem_euclid(30.0) < 20.0));
        // whole-run average rate still targets 50 rps: 15 000 expected, sigma ≈ 122
        assert!((arrivals.len() as f64 - 15_000.0).abs() < 370.0);
        assert!(arrivals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn seeded_streams_repeat() {
        let spec = WorkloadSpec { seed: 5, run_duration_s: 30.0, ..WorkloadSpec::default() };
        assert_eq!(generate_workload(&spec).unwrap(), generate_workload(&spec).unwrap());
        let other = WorkloadSpec { seed: 6, ..spec.clone() };
        assert_ne!(generate_workload(&spec).unwrap(), generate_workload(&other).unwrap());
    }

    #[test]
    fn rejects_non_positive_rate() {
        let spec = WorkloadSpec { target_rps: 0.0, ..WorkloadSpec::default() };
        assert!(generate_workload(&spec).is_err());
    }
}
