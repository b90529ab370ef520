//! Expected free energy `G(a) = risk + ambiguity + cost` and softmax action selection.
//!
//! Risk is the per-factor KL divergence of predicted observation marginals from the
//! normalized preferences, summed over factors. Ambiguity is the expected entropy of
//! the observation likelihood under the predicted state distribution. Cost is
//! `kappa * (ln 3 - H(weights))`, zero for an even split across tiers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::observation::ObservationModel;
use super::policy::Weights;
use super::preference::PreferenceModel;
use super::GenerativeModel;
use crate::belief::{entropy, BeliefVector};
use crate::space::NUM_FACTORS;

pub const DEFAULT_KAPPA: f64 = 0.1;
pub const DEFAULT_BETA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyBreakdown {
    pub risk: f64,
    pub ambiguity: f64,
    pub cost: f64,
    pub total: f64,
}

impl FreeEnergyBreakdown {
    fn new(risk: f64, ambiguity: f64, cost: f64) -> Self {
        Self {
            risk,
            ambiguity,
            cost,
            total: risk + ambiguity + cost,
        }
    }
}

/// Predicted marginal over each factor's bins under `b_next`.
pub fn predict_observations(b_next: &BeliefVector, a: &ObservationModel) -> [Vec<f64>; NUM_FACTORS] {
    std::array::from_fn(|k| {
        let f = a.factor(k);
        (0..f.bins())
            .map(|j| {
                b_next
                    .probs()
                    .iter()
                    .enumerate()
                    .map(|(s, p)| f.prob(j, s) * p)
                    .sum()
            })
            .collect()
    })
}

/// `KL(p ‖ q)` in nats, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

pub fn risk(pred: &[Vec<f64>; NUM_FACTORS], c: &PreferenceModel) -> f64 {
    (0..NUM_FACTORS)
        .map(|k| kl_divergence(&pred[k], &c.normalized(k)))
        .sum()
}

pub fn ambiguity(b_next: &BeliefVector, a: &ObservationModel) -> f64 {
    b_next
        .probs()
        .iter()
        .zip(a.state_entropy())
        .map(|(p, h)| p * h)
        .sum()
}

pub fn action_cost(weights: &Weights, kappa: f64) -> f64 {
    (kappa * (3f64.ln() - entropy(&weights.as_array()))).max(0.0)
}

/// Scores one policy from the current belief, one step ahead.
pub fn expected_free_energy(
    b: &BeliefVector,
    model: &GenerativeModel,
    policy: usize,
    kappa: f64,
) -> FreeEnergyBreakdown {
    let weights = model
        .policies()
        .get(policy)
        .unwrap_or_else(|| panic!("policy {policy} not in table"))
        .weights;
    let b_next = model.transition().predict(policy, b);
    let pred = predict_observations(&b_next, model.observation());
    FreeEnergyBreakdown::new(
        risk(&pred, model.preference()),
        ambiguity(&b_next, model.observation()),
        action_cost(&weights, kappa),
    )
}

/// Scores every policy in the table.
pub fn evaluate_policies(b: &BeliefVector, model: &GenerativeModel, kappa: f64) -> Vec<FreeEnergyBreakdown> {
    evaluate_policies_with(b, model, model.preference(), kappa)
}

/// Scores every policy against preferences `c` instead of the model's own.
pub fn evaluate_policies_with(
    b: &BeliefVector,
    model: &GenerativeModel,
    c: &PreferenceModel,
    kappa: f64,
) -> Vec<FreeEnergyBreakdown> {
    // Preference marginals do not depend on the action.
    let prefs: Vec<Vec<f64>> = (0..NUM_FACTORS).map(|k| c.normalized(k)).collect();
    model
        .policies()
        .iter()
        .map(|p| {
            let b_next = model.transition().predict(p.id, b);
            let pred = predict_observations(&b_next, model.observation());
            let risk = (0..NUM_FACTORS).map(|k| kl_divergence(&pred[k], &prefs[k])).sum();
            FreeEnergyBreakdown::new(
                risk,
                ambiguity(&b_next, model.observation()),
                action_cost(&p.weights, kappa),
            )
        })
        .collect()
}

/// `p(a) ∝ exp(-beta * G(a))`, stabilized by subtracting the minimum `G`.
pub fn action_probabilities(g: &[f64], beta: f64) -> Vec<f64> {
    assert!(!g.is_empty(), "no actions to score");
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = g.iter().map(|x| (-beta * (x - min)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Lowest `G`, lowest id on ties.
pub fn argmin(g: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in g.iter().enumerate() {
        if x < g[best] {
            best = i;
        }
    }
    best
}

pub fn select_action<R: Rng + ?Sized>(g: &[f64], beta: f64, rng: &mut R) -> usize {
    sample_index(&action_probabilities(g, beta), rng)
}

/// Inverse-CDF draw from a normalized distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the final partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
