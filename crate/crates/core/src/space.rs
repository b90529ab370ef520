//! Discrete state and observation spaces.
//!
//! A hidden state is a point on the grid `{0,1,2}^5`:
//! `(latency level, request-rate level, heavy util, medium util, light util)`.
//! States are flattened with a mixed-radix code, latency most significant:
//!
//! ```text
//! index = latency*81 + rate*27 + util_heavy*9 + util_medium*3 + util_light
//! ```
//!
//! The order is part of the serialized model format and must not change.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of levels per state dimension.
pub const LEVELS: usize = 3;
/// Number of state dimensions.
pub const STATE_DIMS: usize = 5;
/// `3^5`.
pub const NUM_STATES: usize = 243;

/// Radix weights, most significant first.
pub const RADIX: [usize; STATE_DIMS] = [81, 27, 9, 3, 1];

/// Human-readable radix order, stored in serialized models.
pub const RADIX_ORDER: &str = "latency,rate,util_heavy,util_medium,util_light";

/// Observation factor cardinalities: latency, rate, queue, error.
pub const OBS_BINS: [usize; NUM_FACTORS] = [3, 3, 3, 2];
pub const NUM_FACTORS: usize = 4;
pub const FACTOR_NAMES: [&str; NUM_FACTORS] = ["latency", "rate", "queue", "error"];

/// Position of each tier's utilization inside the state tuple.
pub const DIM_UTIL_HEAVY: usize = 2;
pub const DIM_UTIL_MEDIUM: usize = 3;
pub const DIM_UTIL_LIGHT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateTuple {
    pub latency_level: u8,
    pub rate_level: u8,
    pub util_heavy: u8,
    pub util_medium: u8,
    pub util_light: u8,
}

impl StateTuple {
    pub fn new(latency: u8, rate: u8, heavy: u8, medium: u8, light: u8) -> Self {
        Self {
            latency_level: latency,
            rate_level: rate,
            util_heavy: heavy,
            util_medium: medium,
            util_light: light,
        }
    }

    /// Fields in radix order.
    pub fn digits(&self) -> [u8; STATE_DIMS] {
        [
            self.latency_level,
            self.rate_level,
            self.util_heavy,
            self.util_medium,
            self.util_light,
        ]
    }

    fn from_digits(d: [u8; STATE_DIMS]) -> Self {
        Self::new(d[0], d[1], d[2], d[3], d[4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateIndex(usize);

impl StateIndex {
    pub fn new(index: usize) -> Result<Self> {
        if index < NUM_STATES {
            Ok(Self(index))
        } else {
            Err(Error::InvalidIndex(index))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// All 243 indices in ascending order.
    pub fn all() -> impl Iterator<Item = StateIndex> {
        (0..NUM_STATES).map(StateIndex)
    }
}

const STATE_FIELDS: [&str; STATE_DIMS] = [
    "latency_level",
    "rate_level",
    "util_heavy",
    "util_medium",
    "util_light",
];

pub fn encode_state(s: &StateTuple) -> Result<StateIndex> {
    let mut index = 0;
    for (k, digit) in s.digits().into_iter().enumerate() {
        if usize::from(digit) >= LEVELS {
            return Err(Error::InvalidState {
                field: STATE_FIELDS[k],
                value: digit,
            });
        }
        index += usize::from(digit) * RADIX[k];
    }
    Ok(StateIndex(index))
}

pub fn decode_state(i: StateIndex) -> StateTuple {
    let mut rest = i.0;
    let mut digits = [0u8; STATE_DIMS];
    for (k, w) in RADIX.iter().enumerate() {
        digits[k] = (rest / w) as u8;
        rest %= w;
    }
    StateTuple::from_digits(digits)
}

/// Decodes a raw index, rejecting values outside `[0, 243)`.
pub fn decode_index(i: usize) -> Result<StateTuple> {
    StateIndex::new(i).map(decode_state)
}

/// Level of dimension `dim` at flat state `s`.
#[inline]
pub fn digit(s: usize, dim: usize) -> usize {
    (s / RADIX[dim]) % LEVELS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservationTuple {
    pub latency_bin: u8,
    pub rate_bin: u8,
    pub queue_bin: u8,
    pub error_bin: u8,
}

impl ObservationTuple {
    pub fn new(latency: u8, rate: u8, queue: u8, error: u8) -> Result<Self> {
        let o = Self {
            latency_bin: latency,
            rate_bin: rate,
            queue_bin: queue,
            error_bin: error,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, b) in self.bins().into_iter().enumerate() {
            if usize::from(b) >= OBS_BINS[k] {
                return Err(Error::InvalidObservation {
                    factor: FACTOR_NAMES[k],
                    value: b,
                    bins: OBS_BINS[k],
                });
            }
        }
        Ok(())
    }

    pub fn bins(&self) -> [u8; NUM_FACTORS] {
        [self.latency_bin, self.rate_bin, self.queue_bin, self.error_bin]
    }
}
