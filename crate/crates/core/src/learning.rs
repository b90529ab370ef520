//! Online learning of the observation and transition models.
//!
//! A gains `alpha * q(s_t)` on the observed row of each factor. B gains a weighted
//! outer product of consecutive beliefs, sampled from a replay buffer, with weight
//! `w(dt) = 1 / (1 + exp(-(dt - 2) / 2))` where `dt` is the time since the last policy change.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use crate::belief::BeliefVector;
use crate::error::Result;
use crate::model::{ObservationModel, TransitionModel};
use crate::space::{decode_index, ObservationTuple, StateTuple, NUM_STATES};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_ALPHA_B: f64 = 0.05;
pub const REPLAY_CAPACITY: usize = 5000;
pub const BATCH_SIZE: usize = 100;

pub fn sigmoid_weight(dt: f64) -> f64 {
    1.0 / (1.0 + (-(dt - 2.0) / 2.0).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    /// Fast tick at which the record was produced.
    pub tick: u64,
    pub prior_belief: Arc<BeliefVector>,
    pub posterior_belief: Arc<BeliefVector>,
    pub action: usize,
    pub observation: ObservationTuple,
    pub dt_since_action_change: f64,
}

impl TransitionRecord {
    pub fn weight(&self) -> f64 {
        sigmoid_weight(self.dt_since_action_change)
    }
}

/// Bounded FIFO of recent transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    records: VecDeque<TransitionRecord>,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::with_capacity(REPLAY_CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs capacity");
        Self {
            capacity,
            records: VecDeque::with_capacity(capacity),
        }
    }

    pub fn record(&mut self, rec: TransitionRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionRecord> {
        self.records.iter()
    }

    /// Uniform sample of `min(size, len)` distinct records, in buffer order.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<TransitionRecord> {
        let n = size.min(self.records.len());
        let mut picks = index::sample(rng, self.records.len(), n).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| self.records[i].clone()).collect()
    }
}

pub fn update_observation_model(
    a: &mut ObservationModel,
    o: &ObservationTuple,
    belief: &BeliefVector,
    alpha: f64,
) {
    a.learn(o, belief, alpha);
}

pub fn update_transition_model(b: &mut TransitionModel, batch: &[TransitionRecord], alpha_b: f64) {
    b.learn_batch(batch.iter().map(|r| {
        (
            r.action,
            r.prior_belief.as_ref(),
            r.posterior_belief.as_ref(),
            alpha_b * r.weight(),
        )
    }));
}

/// One line of the optional experience log.
#[derive(Debug, Clone, Serialize)]
pub struct ExperienceLine {
    pub tick: u64,
    pub action: usize,
    pub observation: [u8; 4],
    pub prior_state: StateTuple,
    pub posterior_state: StateTuple,
    pub dt: f64,
    pub weight: f64,
}

impl ExperienceLine {
    pub fn from_record(rec: &TransitionRecord) -> Self {
        let state = |b: &BeliefVector| {
            debug_assert_eq!(b.len(), NUM_STATES);
            decode_index(b.argmax()).expect("argmax is a valid state")
        };
        Self {
            tick: rec.tick,
            action: rec.action,
            observation: rec.observation.bins(),
            prior_state: state(&rec.prior_belief),
            posterior_state: state(&rec.posterior_belief),
            dt: rec.dt_since_action_change,
            weight: rec.weight(),
        }
    }
}

/// Append-only JSON-lines log of transition summaries.
pub struct ExperienceLog<W: Write> {
    out: W,
}

impl<W: Write> ExperienceLog<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn append(&mut self, rec: &TransitionRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, &ExperienceLine::from_record(rec))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
