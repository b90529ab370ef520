//! Generative model: observation likelihoods (A), per-action dynamics (B),
//! preferences (C) and the routing policy table.

pub mod codec;
pub mod efe;
pub mod observation;
pub mod policy;
pub mod preference;
pub mod transition;

use crate::belief::BeliefVector;
use crate::error::{Error, Result};
use crate::space::NUM_STATES;

pub use efe::FreeEnergyBreakdown;
pub use observation::{FactorCounts, ObservationModel};
pub use policy::{Policy, PolicyLabel, PolicyTable, Weights};
pub use preference::{PreferenceMode, PreferenceModel, PreferenceSpec, ProtectiveShift};
pub use transition::TransitionModel;

/// Initial pseudo-counts: uniform `observation` in every A cell; `transition_base`
/// everywhere in B plus `transition_stay` on the diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPrior {
    pub observation: f64,
    pub transition_base: f64,
    pub transition_stay: f64,
}

impl Default for ModelPrior {
    fn default() -> Self {
        Self {
            observation: 1.0,
            transition_base: 1.0,
            transition_stay: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    a: ObservationModel,
    b: TransitionModel,
    c: PreferenceModel,
    policies: PolicyTable,
}

impl GenerativeModel {
    /// Fresh 243-state model: uniform A, stay-biased B, given preferences and policies.
    pub fn initial(prefs: PreferenceModel, policies: PolicyTable, prior: ModelPrior) -> Self {
        let a = ObservationModel::with_prior(NUM_STATES, prior.observation);
        let b = TransitionModel::with_prior(NUM_STATES, policies.len(), prior.transition_base, prior.transition_stay);
        Self::from_parts(a, b, prefs, policies)
            .expect("initial model dimensions agree")
    }

    pub fn from_parts(
        a: ObservationModel,
        b: TransitionModel,
        c: PreferenceModel,
        policies: PolicyTable,
    ) -> Result<Self> {
        if a.states() != b.states() {
            return Err(Error::Format(format!(
                "observation model has {} states, transition model {}",
                a.states(),
                b.states()
            )));
        }
        if b.actions() != policies.len() {
            return Err(Error::Format(format!(
                "transition model has {} actions, policy table {}",
                b.actions(),
                policies.len()
            )));
        }
        Ok(Self { a, b, c, policies })
    }

    pub fn states(&self) -> usize {
        self.a.states()
    }

    pub fn observation(&self) -> &ObservationModel {
        &self.a
    }

    pub fn observation_mut(&mut self) -> &mut ObservationModel {
        &mut self.a
    }

    pub fn transition(&self) -> &TransitionModel {
        &self.b
    }

    pub fn transition_mut(&mut self) -> &mut TransitionModel {
        &mut self.b
    }

    pub fn preference(&self) -> &PreferenceModel {
        &self.c
    }

    pub fn set_preference(&mut self, c: PreferenceModel) {
        self.c = c;
    }

    pub fn policies(&self) -> &PolicyTable {
        &self.policies
    }
}

/// `B_a · b` for policy `action`.
pub fn belief_predict(b: &BeliefVector, model: &TransitionModel, action: usize) -> BeliefVector {
    model.predict(action, b)
}
