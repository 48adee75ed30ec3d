//! Monophone GMM-HMM acoustic models.

mod gmm;
mod io;
mod train;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::align::graph::Emissions;
use crate::dsp::FeatureMatrix;
use crate::g2p::{Phone, PhoneSeq, UnknownPhone};

pub use gmm::{logsumexp, Gmm};
pub use train::{flat_start, linear_graph, mixup, train, utterance_units, viterbi_train, TrainConfig, TrainReport, Utterance};

/// Emitting states per HMM.
pub const STATES: usize = 3;
pub const DEFAULT_VAR_FLOOR: f64 = 1e-4;
/// Bounds for re-estimated self-loop probabilities.
pub const MIN_TRANSITION: f64 = 0.01;
pub const MAX_TRANSITION: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AmError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("utterance {index} has {frames} frames but needs at least {states}")]
    UtteranceTooShort { index: usize, frames: usize, states: usize },
    #[error("no utterance could be aligned ({skipped} skipped)")]
    AlignmentFailure { skipped: usize },
    #[error("feature dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature fingerprint {features:?} does not match model {model:?}")]
    FingerprintMismatch { model: String, features: String },
    #[error("unknown unit {0:?}")]
    UnknownUnit(String),
    #[error("state {0} out of range")]
    BadState(usize),
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// An HMM label: silence or a phone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unit {
    Sil,
    Phone(Phone),
}

impl Unit {
    pub fn all() -> impl Iterator<Item = Unit> {
        std::iter::once(Unit::Sil).chain(Phone::all().map(Unit::Phone))
    }

    pub fn count() -> usize {
        Phone::count() + 1
    }

    pub fn index(self) -> usize {
        match self {
            Unit::Sil => 0,
            Unit::Phone(p) => p.index() + 1,
        }
    }

    /// Dense id of one emitting state, in `0..Unit::count() * STATES`.
    pub fn state_id(self, state: usize) -> usize {
        self.index() * STATES + state
    }

    pub fn is_sil(self) -> bool {
        self == Unit::Sil
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Sil => f.write_str("sil"),
            Unit::Phone(p) => f.write_str(p.symbol()),
        }
    }
}

impl FromStr for Unit {
    type Err = UnknownPhone;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "sil" {
            Ok(Unit::Sil)
        } else {
            s.parse().map(Unit::Phone)
        }
    }
}

impl From<Phone> for Unit {
    fn from(p: Phone) -> Self {
        Unit::Phone(p)
    }
}

/// Three-state left-to-right HMM without skips.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneHmm {
    pub unit: Unit,
    pub states: Vec<Gmm>,
    /// Self-loop probability per state; the forward probability is the rest.
    pub self_loop: Vec<f64>,
}

impl PhoneHmm {
    pub fn forward(&self, state: usize) -> f64 {
        1.0 - self.self_loop[state]
    }

    /// Expected number of frames spent in the model.
    pub fn expected_frames(&self) -> f64 {
        self.self_loop.iter().map(|p| 1.0 / (1.0 - p)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    hmms: BTreeMap<Unit, PhoneHmm>,
    pub fingerprint: String,
    pub dim: usize,
    pub var_floor: f64,
}

impl AcousticModel {
    /// Every unit must be present.
    pub fn new(hmms: BTreeMap<Unit, PhoneHmm>, fingerprint: String, dim: usize, var_floor: f64) -> Result<AcousticModel, AmError> {
        for u in Unit::all() {
            let h = hmms.get(&u).ok_or_else(|| AmError::UnknownUnit(u.to_string()))?;
            if h.states.len() != STATES || h.self_loop.len() != STATES {
                return Err(AmError::BadState(h.states.len()));
            }
            if let Some(g) = h.states.iter().find(|g| g.dim() != dim) {
                return Err(AmError::DimensionMismatch { expected: dim, got: g.dim() });
            }
        }
        Ok(AcousticModel {
            hmms,
            fingerprint,
            dim,
            var_floor,
        })
    }

    pub fn hmm(&self, unit: Unit) -> &PhoneHmm {
        &self.hmms[&unit]
    }

    pub fn hmm_mut(&mut self, unit: Unit) -> &mut PhoneHmm {
        self.hmms.get_mut(&unit).expect("model covers every unit")
    }

    pub fn hmms(&self) -> impl Iterator<Item = &PhoneHmm> {
        self.hmms.values()
    }

    /// Log density of `frame` under one state of one unit.
    pub fn frame_loglik(&self, unit: Unit, state: usize, frame: &[f64]) -> Result<f64, AmError> {
        if state >= STATES {
            return Err(AmError::BadState(state));
        }
        if frame.len() != self.dim {
            return Err(AmError::DimensionMismatch {
                expected: self.dim,
                got: frame.len(),
            });
        }
        Ok(self.hmms[&unit].states[state].loglik(frame))
    }

    pub fn phone_loglik(&self, phone: &str, state: usize, frame: &[f64]) -> Result<f64, AmError> {
        let unit: Unit = phone.parse().map_err(|_| AmError::UnknownUnit(phone.to_string()))?;
        self.frame_loglik(unit, state, frame)
    }

    fn gmm_by_id(&self, id: usize) -> &Gmm {
        let unit = Unit::all().nth(id / STATES).expect("state id in range");
        &self.hmms[&unit].states[id % STATES]
    }

    pub fn check_features(&self, f: &FeatureMatrix) -> Result<(), AmError> {
        if f.fingerprint != self.fingerprint {
            return Err(AmError::FingerprintMismatch {
                model: self.fingerprint.clone(),
                features: f.fingerprint.clone(),
            });
        }
        if f.cols() != self.dim {
            return Err(AmError::DimensionMismatch {
                expected: self.dim,
                got: f.cols(),
            });
        }
        Ok(())
    }

    /// Emission table whose column `c` scores state id `ids[c]`.
    pub fn emissions(&self, f: &FeatureMatrix, ids: &[usize]) -> Emissions {
        let gmms: Vec<&Gmm> = ids.iter().map(|&id| self.gmm_by_id(id)).collect();
        let width = ids.len();
        let mut data = vec![0.0; f.rows() * width];
        data.par_chunks_mut(width.max(1)).enumerate().for_each(|(t, row)| {
            let x = f.row(t);
            for (c, g) in gmms.iter().enumerate() {
                row[c] = g.loglik(x);
            }
        });
        Emissions::new(f.rows(), width, data)
    }

    /// Emission table over every state of every unit, indexed by state id.
    pub fn all_emissions(&self, f: &FeatureMatrix) -> Emissions {
        let ids: Vec<usize> = (0..Unit::count() * STATES).collect();
        self.emissions(f, &ids)
    }

    pub fn expected_frames(&self, unit: Unit) -> f64 {
        self.hmms[&unit].expected_frames()
    }

    /// Expected frames for a phone sequence (no silence).
    pub fn expected_frames_of(&self, phones: &PhoneSeq) -> f64 {
        phones.iter().map(|&p| self.expected_frames(Unit::Phone(p))).sum()
    }

    /// Largest deviation from 1 among weight vectors and transition rows.
    pub fn stochasticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for h in self.hmms.values() {
            for (g, &p) in h.states.iter().zip(&h.self_loop) {
                worst = worst.max((g.weights().iter().sum::<f64>() - 1.0).abs());
                worst = worst.max((p + (1.0 - p) - 1.0).abs());
                if !(0.0..=1.0).contains(&p) {
                    worst = worst.max(1.0);
                }
            }
        }
        worst
    }

    /// Smallest variance anywhere in the model.
    pub fn min_variance(&self) -> f64 {
        self.hmms
            .values()
            .flat_map(|h| h.states.iter())
            .flat_map(|g| g.vars().iter().flatten().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), AmError> {
        std::fs::write(path, self.to_text()).map_err(|e| AmError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<AcousticModel, AmError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| AmError::Io(format!("{}: {e}", path.as_ref().display())))?;
        AcousticModel::from_text(&text)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ids_are_dense() {
        let ids: Vec<usize> = Unit::all().flat_map(|u| (0..STATES).map(move |s| u.state_id(s))).collect();
        assert_eq!(ids, (0..Unit::count() * STATES).collect::<Vec<_>>());
        assert_eq!("sil".parse::<Unit>().unwrap(), Unit::Sil);
        assert_eq!("tS".parse::<Unit>().unwrap().to_string(), "tS");
        assert!("xx".parse::<Unit>().is_err());
    }
}
