//! Discrete routing policies: weight vectors over the light, medium and heavy tiers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_POLICY_COUNT: usize = 20;
const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyLabel {
    Balanced,
    HeavyBiased,
    MediumBiased,
    LightBiased,
    Exploratory,
}

impl PolicyLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Balanced => "balanced",
            Self::HeavyBiased => "heavy-biased",
            Self::MediumBiased => "medium-biased",
            Self::LightBiased => "light-biased",
            Self::Exploratory => "exploratory",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "balanced" => Self::Balanced,
            "heavy-biased" => Self::HeavyBiased,
            "medium-biased" => Self::MediumBiased,
            "light-biased" => Self::LightBiased,
            "exploratory" => Self::Exploratory,
            other => return Err(Error::InvalidPolicy(format!("unknown label `{other}`"))),
        })
    }
}

/// Routing weights `(light, medium, heavy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub light: f64,
    pub medium: f64,
    pub heavy: f64,
}

impl Weights {
    pub fn new(light: f64, medium: f64, heavy: f64) -> Result<Self> {
        let w = Self { light, medium, heavy };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidPolicy(format!("negative or non-finite weight in {a:?}")));
        }
        let total: f64 = a.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidPolicy(format!("weights {a:?} sum to {total}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.light, self.medium, self.heavy]
    }

    /// Fixed-weight baseline allocation.
    pub fn baseline() -> Self {
        Self {
            light: 0.33,
            medium: 0.33,
            heavy: 0.34,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub id: usize,
    pub weights: Weights,
    pub label: PolicyLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    policies: Vec<Policy>,
}

impl PolicyTable {
    pub fn new(entries: Vec<(Weights, PolicyLabel)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidPolicy("empty policy table".into()));
        }
        let policies = entries
            .into_iter()
            .enumerate()
            .map(|(id, (weights, label))| {
                weights.validate()?;
                Ok(Policy { id, weights, label })
            })
            .collect::<Result<_>>()?;
        Ok(Self { policies })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Policy> {
        self.policies.get(id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Policy> {
        self.policies.iter()
    }

    /// Id of the balanced policy, if present.
    pub fn balanced(&self) -> Option<usize> {
        self.policies
            .iter()
            .find(|p| p.label == PolicyLabel::Balanced)
            .map(|p| p.id)
    }
}

impl Default for PolicyTable {
    fn default() -> Self {
        use PolicyLabel::*;
        const TABLE: [(f64, f64, f64, PolicyLabel); DEFAULT_POLICY_COUNT] = [
            (0.33, 0.33, 0.34, Balanced),
            (0.15, 0.25, 0.60, HeavyBiased),
            (0.10, 0.20, 0.70, HeavyBiased),
            (0.05, 0.15, 0.80, HeavyBiased),
            (0.00, 0.10, 0.90, HeavyBiased),
            (0.00, 0.00, 1.00, HeavyBiased),
            (0.20, 0.60, 0.20, MediumBiased),
            (0.15, 0.70, 0.15, MediumBiased),
            (0.10, 0.80, 0.10, MediumBiased),
            (0.00, 1.00, 0.00, MediumBiased),
            (0.60, 0.20, 0.20, LightBiased),
            (0.70, 0.15, 0.15, LightBiased),
            (0.80, 0.10, 0.10, LightBiased),
            (1.00, 0.00, 0.00, LightBiased),
            (0.50, 0.30, 0.20, Exploratory),
            (0.20, 0.30, 0.50, Exploratory),
            (0.40, 0.40, 0.20, Exploratory),
            (0.20, 0.40, 0.40, Exploratory),
            (0.40, 0.20, 0.40, Exploratory),
            (0.25, 0.50, 0.25, Exploratory),
        ];
        Self::new(
            TABLE
                .iter()
                .map(|&(l, m, h, label)| (Weights { light: l, medium: m, heavy: h }, label))
                .collect(),
        )
        .expect("default policy table is valid")
    }
}
