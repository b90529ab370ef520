//! Active-inference request routing.
//!
//! A router keeps a posterior over 243 discrete backend load states, scores 20 routing
//! weight vectors by expected free energy, and learns its observation and transition
//! models online. The crate also contains a discrete-event testbed of three
//! heterogeneous tiers and the experiment harness used to compare the router against a
//! fixed-weight baseline.

pub mod belief;
pub mod dispatch;
pub mod engine;
pub mod error;
pub mod harness;
pub mod learning;
pub mod model;
pub mod observe;
pub mod sim;
pub mod space;

pub use belief::{belief_update, BeliefVector};
pub use dispatch::{choose_tier, Tier, WeightSnapshot};
pub use engine::{Engine, EngineConfig, Learner};
pub use error::{Error, Result};
pub use model::{GenerativeModel, Policy, PolicyTable, PreferenceMode, Weights};
pub use observe::{RequestOutcome, Status};
pub use space::{decode_state, encode_state, ObservationTuple, StateIndex, StateTuple};
