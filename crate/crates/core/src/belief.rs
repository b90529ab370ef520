//! Posterior distributions over hidden states and the Bayesian update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization tolerance for belief vectors.
pub const NORM_TOL: f64 = 1e-9;

/// Probability distribution over a finite state set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "belief over an empty state set");
        Self(vec![1.0 / n as f64; n])
    }

    pub fn delta(n: usize, at: usize) -> Self {
        assert!(at < n, "delta index {at} out of range for {n} states");
        let mut p = vec![0.0; n];
        p[at] = 1.0;
        Self(p)
    }

    /// Validates an explicit distribution: non-negative, finite, summing to one.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Config("empty belief vector".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("belief entries must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::Config(format!("belief sums to {total}, expected 1")));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative mass into a distribution.
    pub fn from_mass(mut mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegenerateEvidence);
        }
        for p in &mut mass {
            *p /= total;
        }
        Ok(Self(mass))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }

    /// Most probable state, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Shannon entropy (nats) with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Posterior ∝ likelihood ⊙ prior.
pub fn belief_update(prior: &BeliefVector, likelihood: &[f64]) -> Result<BeliefVector> {
    assert_eq!(prior.len(), likelihood.len(), "likelihood length mismatch");
    let mass: Vec<f64> = prior
        .0
        .iter()
        .zip(likelihood)
        .map(|(p, l)| p * l)
        .collect();
    BeliefVector::from_mass(mass)
}
