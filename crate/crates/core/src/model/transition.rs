//! Per-action transition model `p(s'|s,a)` held as pseudo-counts.
//!
//! Entry `[s', s]` of action `a`'s matrix is stored row-major at `s' * n + s`;
//! the normalized view divides by the column sum over `s'`.

use crate::belief::BeliefVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    states: usize,
    actions: usize,
    counts: Vec<Vec<f64>>,
    col_sums: Vec<Vec<f64>>,
}

impl TransitionModel {
    /// `base` everywhere, plus `stay` on the diagonal.
    pub fn with_prior(states: usize, actions: usize, base: f64, stay: f64) -> Self {
        let mut m = vec![base; states * states];
        for s in 0..states {
            m[s * states + s] += stay;
        }
        Self::from_counts(states, vec![m; actions]).expect("prior pseudo-counts are valid")
    }

    pub fn from_counts(states: usize, counts: Vec<Vec<f64>>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Format("transition model has no actions".into()));
        }
        for (a, m) in counts.iter().enumerate() {
            if m.len() != states * states {
                return Err(Error::Format(format!(
                    "transition matrix {a} has {} cells, expected {states}x{states}",
                    m.len()
                )));
            }
            if m.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(Error::Format(format!(
                    "transition matrix {a} has non-positive pseudo-counts"
                )));
            }
        }
        let actions = counts.len();
        let mut model = Self {
            states,
            actions,
            counts,
            col_sums: vec![vec![0.0; states]; actions],
        };
        for a in 0..actions {
            model.refresh(a);
        }
        Ok(model)
    }

    fn refresh(&mut self, action: usize) {
        let sums = &mut self.col_sums[action];
        sums.iter_mut().for_each(|c| *c = 0.0);
        for row in self.counts[action].chunks_exact(self.states) {
            for (sum, c) in sums.iter_mut().zip(row) {
                *sum += c;
            }
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn counts(&self, action: usize) -> &[f64] {
        &self.counts[action]
    }

    pub fn count(&self, action: usize, to: usize, from: usize) -> f64 {
        self.counts[action][to * self.states + from]
    }

    /// Normalized `p(to | from, action)`.
    pub fn prob(&self, action: usize, to: usize, from: usize) -> f64 {
        self.count(action, to, from) / self.col_sums[action][from]
    }

    /// Normalized column `p(· | from, action)`.
    pub fn column(&self, action: usize, from: usize) -> Vec<f64> {
        (0..self.states).map(|to| self.prob(action, to, from)).collect()
    }

    /// One-step prediction `B_a · b`, renormalized.
    pub fn predict(&self, action: usize, b: &BeliefVector) -> BeliefVector {
        assert_eq!(b.len(), self.states, "belief length mismatch");
        let scaled: Vec<f64> = b
            .probs()
            .iter()
            .zip(&self.col_sums[action])
            .map(|(p, sum)| p / sum)
            .collect();
        let out = self.counts[action]
            .chunks_exact(self.states)
            .map(|row| row.iter().zip(&scaled).map(|(c, x)| c * x).sum())
            .collect();
        BeliefVector::from_mass(out).expect("column-stochastic prediction keeps unit mass")
    }

    /// Adds `weight * posterior[s'] * prior[s]` to entry `[s', s]` of `action`.
    pub fn learn(
        &mut self,
        action: usize,
        prior: &BeliefVector,
        posterior: &BeliefVector,
        weight: f64,
    ) {
        self.accumulate(action, prior, posterior, weight);
        self.refresh(action);
    }

    /// Batch form of [`learn`](Self::learn): column sums are rebuilt once per touched action.
    pub fn learn_batch<'a>(
        &mut self,
        updates: impl IntoIterator<Item = (usize, &'a BeliefVector, &'a BeliefVector, f64)>,
    ) {
        let mut touched = vec![false; self.actions];
        for (action, prior, posterior, weight) in updates {
            self.accumulate(action, prior, posterior, weight);
            touched[action] = true;
        }
        for (a, t) in touched.into_iter().enumerate() {
            if t {
                self.refresh(a);
            }
        }
    }

    fn accumulate(&mut self, action: usize, prior: &BeliefVector, posterior: &BeliefVector, weight: f64) {
        assert!(action < self.actions, "action {action} out of range");
        assert_eq!(prior.len(), self.states, "prior length mismatch");
        assert_eq!(posterior.len(), self.states, "posterior length mismatch");
        if weight == 0.0 {
            return;
        }
        let n = self.states;
        let m = &mut self.counts[action];
        for (to, &q_to) in posterior.probs().iter().enumerate() {
            if q_to == 0.0 {
                continue;
            }
            let scale = weight * q_to;
            for (c, &q_from) in m[to * n..(to + 1) * n].iter_mut().zip(prior.probs()) {
                *c += scale * q_from;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NUM_STATES;

    fn toy() -> TransitionModel {
        // column-stochastic [[0.9,0.2],[0.1,0.8]] as counts
        TransitionModel::from_counts(2, vec![vec![0.9, 0.2, 0.1, 0.8]]).unwrap()
    }

    #[test]
    fn identity_transition_preserves_belief() {
        let n = 6;
        let mut m = vec![1e-300; n * n];
        for s in 0..n {
            m[s * n + s] = 1.0;
        }
        let b_model = TransitionModel::from_counts(n, vec![m]).unwrap();
        let b = BeliefVector::from_probs(vec![0.1, 0.2, 0.3, 0.15, 0.05, 0.2]).unwrap();
        let next = b_model.predict(0, &b);
        for (x, y) in next.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_transition_mixes_to_uniform() {
        let b_model = TransitionModel::with_prior(NUM_STATES, 1, 1.0, 0.0);
        let next = b_model.predict(0, &BeliefVector::delta(NUM_STATES, 17));
        for p in next.probs() {
            assert!((p - 1.0 / 243.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_state_prediction() {
        let next = toy().predict(0, &BeliefVector::delta(2, 0));
        assert!((next.probs()[0] - 0.9).abs() < 1e-15);
        assert!((next.probs()[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn prior_diagonal() {
        let m = TransitionModel::with_prior(NUM_STATES, 20, 1.0, 3.0);
        assert_eq!(m.actions(), 20);
        assert!((m.prob(4, 9, 9) - 4.0 / 246.0).abs() < 1e-15);
        assert!((m.prob(4, 8, 9) - 1.0 / 246.0).abs() < 1e-15);
    }

    #[test]
    fn point_mass_learning_touches_one_cell() {
        let mut m = TransitionModel::with_prior(NUM_STATES, 3, 1.0, 3.0);
        let before = m.clone();
        m.learn(
            1,
            &BeliefVector::delta(NUM_STATES, 3),
            &BeliefVector::delta(NUM_STATES, 7),
            0.025,
        );
        for a in 0..3 {
            for (i, (x, y)) in m.counts(a).iter().zip(before.counts(a)).enumerate() {
                let expected = if a == 1 && i == 7 * NUM_STATES + 3 { 0.025 } else { 0.0 };
                assert!((x - y - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn batch_matches_sequential() {
        let mut seq = TransitionModel::with_prior(5, 2, 1.0, 3.0);
        let mut batch = seq.clone();
        let p = BeliefVector::from_probs(vec![0.1, 0.2, 0.3, 0.2, 0.2]).unwrap();
        let q = BeliefVector::from_probs(vec![0.5, 0.1, 0.1, 0.1, 0.2]).unwrap();
        seq.learn(0, &p, &q, 0.3);
        seq.learn(1, &q, &p, 0.7);
        batch.learn_batch([(0, &p, &q, 0.3), (1, &q, &p, 0.7)]);
        assert_eq!(seq, batch);
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(TransitionModel::from_counts(2, vec![vec![1.0; 3]]).is_err());
        assert!(TransitionModel::from_counts(2, vec![vec![1.0, 0.0, 1.0, 1.0]]).is_err());
        assert!(TransitionModel::from_counts(2, vec![]).is_err());
    }
}
