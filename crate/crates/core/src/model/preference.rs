//! Log-preferences over observation bins, `C(o) = Σ_k C_k(o_k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ObservationTuple, NUM_FACTORS, OBS_BINS};

pub const ERROR_FACTOR: usize = 3;
pub const LATENCY_FACTOR: usize = 0;
/// Index of the high-error bin in the error factor.
pub const HIGH_ERROR_BIN: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceMode {
    Normal,
    Protective,
}

/// Baseline log-preferences per factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSpec {
    pub latency: Vec<f64>,
    pub rate: Vec<f64>,
    pub queue: Vec<f64>,
    pub error: Vec<f64>,
}

impl Default for PreferenceSpec {
    fn default() -> Self {
        Self {
            latency: vec![0.0, -1.5, -3.0],
            rate: vec![0.0, 0.0, 0.0],
            queue: vec![0.0, -1.0, -2.0],
            error: vec![0.0, -3.0],
        }
    }
}

impl PreferenceSpec {
    fn into_components(self) -> [Vec<f64>; NUM_FACTORS] {
        [self.latency, self.rate, self.queue, self.error]
    }
}

/// How protective mode reshapes the baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtectiveShift {
    pub error_high: f64,
    pub latency_scale: f64,
}

impl Default for ProtectiveShift {
    fn default() -> Self {
        Self {
            error_high: -11.5,
            latency_scale: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceModel {
    baseline: [Vec<f64>; NUM_FACTORS],
    components: [Vec<f64>; NUM_FACTORS],
    mode: PreferenceMode,
}

impl PreferenceModel {
    pub fn new(spec: PreferenceSpec) -> Result<Self> {
        let components = spec.into_components();
        for (k, c) in components.iter().enumerate() {
            if c.len() != OBS_BINS[k] {
                return Err(Error::Config(format!(
                    "preference factor {k} has {} entries, expected {}",
                    c.len(),
                    OBS_BINS[k]
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("preference factor {k} is not finite")));
            }
        }
        Ok(Self {
            baseline: components.clone(),
            components,
            mode: PreferenceMode::Normal,
        })
    }

    /// All-zero preferences (uniform after normalization).
    pub fn flat() -> Self {
        Self::new(PreferenceSpec {
            latency: vec![0.0; 3],
            rate: vec![0.0; 3],
            queue: vec![0.0; 3],
            error: vec![0.0; 2],
        })
        .expect("flat preferences are valid")
    }

    pub fn mode(&self) -> PreferenceMode {
        self.mode
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k]
    }

    pub fn error_high(&self) -> f64 {
        self.components[ERROR_FACTOR][HIGH_ERROR_BIN]
    }

    /// `C(o)`.
    pub fn log_preference(&self, o: &ObservationTuple) -> f64 {
        o.bins()
            .iter()
            .enumerate()
            .map(|(k, &b)| self.components[k][usize::from(b)])
            .sum()
    }

    /// `softmax(C_k)`, the preferred outcome distribution for factor `k`.
    pub fn normalized(&self, k: usize) -> Vec<f64> {
        softmax_log(&self.components[k])
    }

    /// Baseline preferences in normal mode, shifted preferences in protective mode.
    pub fn with_mode(&self, mode: PreferenceMode, shift: &ProtectiveShift) -> Self {
        let mut components = self.baseline.clone();
        if mode == PreferenceMode::Protective {
            components[ERROR_FACTOR][HIGH_ERROR_BIN] = shift.error_high;
            for v in &mut components[LATENCY_FACTOR] {
                *v *= shift.latency_scale;
            }
        }
        Self {
            baseline: self.baseline.clone(),
            components,
            mode,
        }
    }
}

fn softmax_log(log_p: &[f64]) -> Vec<f64> {
    let max = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = log_p.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}
