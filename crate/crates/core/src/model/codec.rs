//! Binary model file.
//!
//! ```text
//! magic        8 bytes  "AIFRMODL"
//! version      u32
//! radix order  u32 length + UTF-8
//! states       u32
//! factors      u32, then u32 bins per factor
//! policies     u32, then per policy: 3 × f64 weights (light, medium, heavy),
//!                                    u32 length + UTF-8 label
//! A            per factor, bins × states f64 pseudo-counts, row-major
//! B            per policy, states × states f64 pseudo-counts, row-major [to][from]
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::observation::{FactorCounts, ObservationModel};
use super::policy::{PolicyLabel, PolicyTable, Weights};
use super::transition::TransitionModel;
use super::{GenerativeModel, PreferenceModel};
use crate::error::{Error, Result};
use crate::space::{NUM_FACTORS, NUM_STATES, OBS_BINS, RADIX_ORDER};

pub const MAGIC: &[u8; 8] = b"AIFRMODL";
pub const FORMAT_VERSION: u32 = 1;

/// Learned parts of a model as read from disk. Preferences are configuration, not state.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub observation: ObservationModel,
    pub transition: TransitionModel,
    pub policies: PolicyTable,
}

impl StoredModel {
    pub fn into_model(self, prefs: PreferenceModel) -> Result<GenerativeModel> {
        GenerativeModel::from_parts(self.observation, self.transition, prefs, self.policies)
    }
}

pub fn write_model<W: Write>(model: &GenerativeModel, mut w: W) -> Result<()> {
    if model.states() != NUM_STATES {
        return Err(Error::Format(format!(
            "only {NUM_STATES}-state models are serializable, got {}",
            model.states()
        )));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_str(&mut buf, RADIX_ORDER);
    put_u32(&mut buf, NUM_STATES as u32);
    put_u32(&mut buf, NUM_FACTORS as u32);
    for f in model.observation().factors() {
        put_u32(&mut buf, f.bins() as u32);
    }
    put_u32(&mut buf, model.policies().len() as u32);
    for p in model.policies().iter() {
        for x in p.weights.as_array() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        put_str(&mut buf, p.label.as_str());
    }
    for f in model.observation().factors() {
        put_f64s(&mut buf, f.counts());
    }
    for a in 0..model.transition().actions() {
        put_f64s(&mut buf, model.transition().counts(a));
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<StoredModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let radix = cur.string()?;
    if radix != RADIX_ORDER {
        return Err(Error::Format(format!("radix order `{radix}` does not match `{RADIX_ORDER}`")));
    }
    let states = cur.u32()? as usize;
    if states != NUM_STATES {
        return Err(Error::Format(format!("file has {states} states, expected {NUM_STATES}")));
    }
    let factors = cur.u32()? as usize;
    if factors != NUM_FACTORS {
        return Err(Error::Format(format!("file has {factors} factors, expected {NUM_FACTORS}")));
    }
    let mut bins = [0usize; NUM_FACTORS];
    for b in &mut bins {
        *b = cur.u32()? as usize;
    }
    if bins != OBS_BINS {
        return Err(Error::Format(format!("bin cardinalities {bins:?} do not match {OBS_BINS:?}")));
    }
    let n_policies = cur.u32()? as usize;
    if n_policies == 0 {
        return Err(Error::Format("empty policy table".into()));
    }
    let mut entries = Vec::with_capacity(n_policies);
    for _ in 0..n_policies {
        let w = Weights::new(cur.f64()?, cur.f64()?, cur.f64()?)?;
        let label = PolicyLabel::parse(&cur.string()?)?;
        entries.push((w, label));
    }
    let policies = PolicyTable::new(entries)?;

    let factor_counts = bins
        .iter()
        .map(|&b| FactorCounts::from_counts(b, states, cur.f64s(b * states)?))
        .collect::<Result<Vec<_>>>()?;
    let observation = ObservationModel::from_factors(factor_counts)?;
    let matrices = (0..n_policies)
        .map(|_| cur.f64s(states * states))
        .collect::<Result<Vec<_>>>()?;
    let transition = TransitionModel::from_counts(states, matrices)?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(StoredModel {
        observation,
        transition,
        policies,
    })
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    buf.reserve(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefVector;
    use crate::model::{PreferenceSpec, ModelPrior};
    use crate::space::ObservationTuple;

    fn trained() -> GenerativeModel {
        let mut m = GenerativeModel::initial(
            PreferenceModel::new(PreferenceSpec::default()).unwrap(),
            PolicyTable::default(),
            ModelPrior::default(),
        );
        let b = BeliefVector::from_mass((0..NUM_STATES).map(|i| 1.0 + (i % 5) as f64).collect()).unwrap();
        m.observation_mut().learn(&ObservationTuple::new(2, 1, 0, 1).unwrap(), &b, 0.05);
        m.transition_mut().learn(4, &b, &BeliefVector::delta(NUM_STATES, 9), 0.3);
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = trained();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), FORMAT_VERSION);
        let back = read_model(&buf[..]).unwrap().into_model(m.preference().clone()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let mut buf = Vec::new();
        write_model(&trained(), &mut buf).unwrap();
        assert!(read_model(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_model(&buf[..]).is_err());
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let mut buf = Vec::new();
        write_model(&trained(), &mut buf).unwrap();
        let states_at = 8 + 4 + 4 + RADIX_ORDER.len();
        let mut bad = buf.clone();
        bad[states_at..states_at + 4].copy_from_slice(&81u32.to_le_bytes());
        assert!(matches!(read_model(&bad[..]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        let bins_at = states_at + 8;
        bad[bins_at..bins_at + 4].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(read_model(&bad[..]), Err(Error::Format(_))));
        let mut bad = buf;
        bad[12] ^= 1; // corrupt radix order length
        assert!(read_model(&bad[..]).is_err());
    }

    #[test]
    fn rejects_wrong_version() {
        let mut buf = Vec::new();
        write_model(&trained(), &mut buf).unwrap();
        buf[8..12].copy_from_slice(&99u32.to_le_bytes());
        assert!(read_model(&buf[..]).is_err());
    }
}
