//! Factorized observation model `p(o|s) = Π_k p(o_k|s)` held as pseudo-counts.

use crate::belief::{entropy, BeliefVector};
use crate::error::{Error, Result};
use crate::space::{ObservationTuple, NUM_FACTORS, OBS_BINS};

/// One observation factor: a `bins × states` pseudo-count matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorCounts {
    bins: usize,
    states: usize,
    counts: Vec<f64>,
    col_sums: Vec<f64>,
}

impl FactorCounts {
    pub fn uniform(bins: usize, states: usize, pseudo_count: f64) -> Self {
        Self::from_counts(bins, states, vec![pseudo_count; bins * states])
            .expect("uniform pseudo-counts are valid")
    }

    pub fn from_counts(bins: usize, states: usize, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != bins * states {
            return Err(Error::Format(format!(
                "factor has {} cells, expected {bins}x{states}",
                counts.len()
            )));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Format("pseudo-counts must be finite and positive".into()));
        }
        let mut f = Self {
            bins,
            states,
            counts,
            col_sums: vec![0.0; states],
        };
        f.refresh();
        Ok(f)
    }

    fn refresh(&mut self) {
        self.col_sums.iter_mut().for_each(|c| *c = 0.0);
        for row in self.counts.chunks_exact(self.states) {
            for (sum, c) in self.col_sums.iter_mut().zip(row) {
                *sum += c;
            }
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn count(&self, bin: usize, state: usize) -> f64 {
        self.counts[bin * self.states + state]
    }

    /// Normalized `p(bin | state)`.
    #[inline]
    pub fn prob(&self, bin: usize, state: usize) -> f64 {
        self.counts[bin * self.states + state] / self.col_sums[state]
    }

    /// Normalized column for `state`.
    pub fn column(&self, state: usize) -> Vec<f64> {
        (0..self.bins).map(|j| self.prob(j, state)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    states: usize,
    factors: Vec<FactorCounts>,
    /// Σ_k H(column s of factor k), cached per state.
    state_entropy: Vec<f64>,
}

impl ObservationModel {
    /// Uniform pseudo-count 1.0 in every cell.
    pub fn uniform(states: usize) -> Self {
        Self::with_prior(states, 1.0)
    }

    /// Uniform model with `pseudo_count` in every cell; smaller counts learn faster.
    pub fn with_prior(states: usize, pseudo_count: f64) -> Self {
        Self::from_factors(
            OBS_BINS
                .iter()
                .map(|&bins| FactorCounts::uniform(bins, states, pseudo_count))
                .collect(),
        )
        .expect("uniform factors are consistent")
    }

    pub fn from_factors(factors: Vec<FactorCounts>) -> Result<Self> {
        if factors.len() != NUM_FACTORS {
            return Err(Error::Format(format!(
                "observation model needs {NUM_FACTORS} factors, got {}",
                factors.len()
            )));
        }
        let states = factors[0].states;
        for (k, f) in factors.iter().enumerate() {
            if f.bins != OBS_BINS[k] || f.states != states {
                return Err(Error::Format(format!(
                    "factor {k} has shape {}x{}, expected {}x{states}",
                    f.bins, f.states, OBS_BINS[k]
                )));
            }
        }
        let mut m = Self {
            states,
            factors,
            state_entropy: vec![0.0; states],
        };
        m.refresh_entropy();
        Ok(m)
    }

    fn refresh_entropy(&mut self) {
        for s in 0..self.states {
            self.state_entropy[s] = self.factors.iter().map(|f| entropy(&f.column(s))).sum();
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn factor(&self, k: usize) -> &FactorCounts {
        &self.factors[k]
    }

    pub fn factors(&self) -> &[FactorCounts] {
        &self.factors
    }

    /// Summed likelihood entropy of each state's observation columns.
    pub fn state_entropy(&self) -> &[f64] {
        &self.state_entropy
    }

    /// Likelihood of a single factor's observed bin at every state.
    pub fn factor_likelihood(&self, k: usize, bin: usize) -> Vec<f64> {
        (0..self.states).map(|s| self.factors[k].prob(bin, s)).collect()
    }

    /// `p(o|s)` for every state.
    pub fn likelihood(&self, o: &ObservationTuple) -> Vec<f64> {
        let bins = o.bins();
        let mut out = vec![1.0; self.states];
        for (k, f) in self.factors.iter().enumerate() {
            let row = usize::from(bins[k]);
            for (s, v) in out.iter_mut().enumerate() {
                *v *= f.prob(row, s);
            }
        }
        out
    }

    /// Pseudo-count update: row `o_k` of every factor gains `alpha * belief`.
    pub fn learn(&mut self, o: &ObservationTuple, belief: &BeliefVector, alpha: f64) {
        assert_eq!(belief.len(), self.states, "belief length mismatch");
        if alpha == 0.0 {
            return;
        }
        let bins = o.bins();
        for (k, f) in self.factors.iter_mut().enumerate() {
            let start = usize::from(bins[k]) * f.states;
            for (c, q) in f.counts[start..start + f.states].iter_mut().zip(belief.probs()) {
                *c += alpha * q;
            }
            f.refresh();
        }
        self.refresh_entropy();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NUM_STATES;

    /// Deterministic model whose columns put all mass (up to a tiny floor) on `bin_of(s)`.
    fn near_one_hot(states: usize, bin_of: impl Fn(usize, usize) -> usize) -> ObservationModel {
        let factors = OBS_BINS
            .iter()
            .enumerate()
            .map(|(k, &bins)| {
                let mut counts = vec![1e-300; bins * states];
                for s in 0..states {
                    counts[bin_of(k, s) * states + s] = 1.0;
                }
                FactorCounts::from_counts(bins, states, counts).unwrap()
            })
            .collect();
        ObservationModel::from_factors(factors).unwrap()
    }

    #[test]
    fn uniform_likelihood_is_constant() {
        let a = ObservationModel::uniform(NUM_STATES);
        let o = ObservationTuple::new(2, 1, 0, 1).unwrap();
        let expected = (1.0 / 3.0) * (1.0 / 3.0) * (1.0 / 3.0) * 0.5;
        for v in a.likelihood(&o) {
            assert!((v - expected).abs() < 1e-15);
        }
        assert!((expected - 0.018_518_5).abs() < 1e-6);
    }

    #[test]
    fn one_hot_likelihood_picks_matching_state() {
        // state 7 emits (2,1,0,1); every other state emits (0,0,0,0)
        let a = near_one_hot(NUM_STATES, |k, s| if s == 7 { [2, 1, 0, 1][k] } else { 0 });
        let o = ObservationTuple::new(2, 1, 0, 1).unwrap();
        let like = a.likelihood(&o);
        assert!((like[7] - 1.0).abs() < 1e-12);
        for (s, v) in like.iter().enumerate() {
            if s != 7 {
                assert!(*v < 1e-290);
            }
        }
    }

    #[test]
    fn likelihood_factorizes() {
        let mut a = ObservationModel::uniform(NUM_STATES);
        let o = ObservationTuple::new(1, 2, 0, 1).unwrap();
        let b = BeliefVector::from_mass((0..NUM_STATES).map(|i| 1.0 + (i % 7) as f64).collect()).unwrap();
        a.learn(&o, &b, 3.0);
        let o2 = ObservationTuple::new(0, 2, 1, 0).unwrap();
        let joint = a.likelihood(&o2);
        let mut product = vec![1.0; NUM_STATES];
        for (k, bin) in o2.bins().iter().enumerate() {
            for (p, l) in product.iter_mut().zip(a.factor_likelihood(k, usize::from(*bin))) {
                *p *= l;
            }
        }
        for (x, y) in joint.iter().zip(&product) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn learn_delta_belief_adds_alpha_at_state() {
        let mut a = ObservationModel::uniform(NUM_STATES);
        let before = a.clone();
        let o = ObservationTuple::new(2, 0, 1, 1).unwrap();
        a.learn(&o, &BeliefVector::delta(NUM_STATES, 42), 0.05);
        for (k, bin) in o.bins().iter().enumerate() {
            for j in 0..OBS_BINS[k] {
                for s in 0..NUM_STATES {
                    let delta = a.factor(k).count(j, s) - before.factor(k).count(j, s);
                    let expected = if j == usize::from(*bin) && s == 42 { 0.05 } else { 0.0 };
                    assert!((delta - expected).abs() < 1e-15, "k={k} j={j} s={s}");
                }
            }
        }
    }

    #[test]
    fn learn_uniform_belief_spreads_alpha() {
        let mut a = ObservationModel::uniform(NUM_STATES);
        let o = ObservationTuple::new(0, 0, 0, 0).unwrap();
        a.learn(&o, &BeliefVector::uniform(NUM_STATES), 0.05);
        let inc = a.factor(0).count(0, 10) - 1.0;
        assert!((inc - 0.05 / 243.0).abs() < 1e-15);
        assert!((inc - 2.058e-4).abs() < 1e-7);
        let total: f64 = a.factor(3).counts().iter().sum();
        assert!((total - (2.0 * 243.0 + 0.05)).abs() < 1e-9);
    }

    #[test]
    fn zero_alpha_is_noop() {
        let mut a = ObservationModel::uniform(NUM_STATES);
        let before = a.clone();
        a.learn(
            &ObservationTuple::new(1, 1, 1, 1).unwrap(),
            &BeliefVector::delta(NUM_STATES, 0),
            0.0,
        );
        assert_eq!(a, before);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(FactorCounts::from_counts(3, 2, vec![1.0; 5]).is_err());
        assert!(FactorCounts::from_counts(2, 2, vec![1.0, 0.0, 1.0, 1.0]).is_err());
        let factors = vec![FactorCounts::uniform(3, 4, 1.0); 4];
        assert!(ObservationModel::from_factors(factors).is_err());
    }
}
