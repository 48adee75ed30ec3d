//! Forced alignment.

mod force;
pub mod graph;
mod long;
mod region;

use serde::{Deserialize, Serialize};

use crate::am::AmError;
use crate::dsp::{DspError, FeatureMatrix};
use crate::g2p::G2pError;
use crate::vad::VadError;

pub use force::{force_align, frames_duration, AlignOptions, WordPron};
pub use long::{align_long, speech_frames, LongOptions};
pub use region::realign_region;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error(transparent)]
    G2p(#[from] G2pError),
    #[error(transparent)]
    Model(#[from] AmError),
    #[error(transparent)]
    Audio(#[from] DspError),
    #[error(transparent)]
    Vad(#[from] VadError),
    #[error("transcription needs at least {required} frames, audio has {available}")]
    GraphTooLong { required: usize, available: usize },
    #[error("no complete path through the alignment graph")]
    NoPath,
    #[error("region [{t0}, {t1}] is outside [0, {duration}]")]
    RegionOutOfRange { t0: f64, t1: f64, duration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedInterval {
    pub label: String,
    pub start: f64,
    pub end: f64,
    /// Mean per-frame emission log-likelihood.
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub words: Vec<AlignedInterval>,
    pub phones: Vec<AlignedInterval>,
    pub duration: f64,
    /// Set when long-audio alignment had to fall back to a best-effort
    /// result.
    #[serde(default)]
    pub low_confidence: bool,
}

/// Time of the boundary before frame `k`. Interior boundaries sit midway
/// between the centers of neighbouring frames: `k·hop + (win − hop)/2`.
pub fn boundary_time(k: usize, frames: usize, hop: f64, win: f64, duration: f64) -> f64 {
    if k == 0 {
        0.0
    } else if k >= frames {
        duration
    } else {
        k as f64 * hop + (win - hop) / 2.0
    }
}

/// Inverse of [`boundary_time`] for times it produced.
pub fn boundary_frame(t: f64, frames: usize, hop: f64, win: f64, duration: f64) -> usize {
    if t <= 0.0 {
        0
    } else if t >= duration {
        frames
    } else {
        (((t - (win - hop) / 2.0) / hop).round().max(0.0) as usize).min(frames)
    }
}

/// Frame-indexed interval used while building alignments.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FrameSpan {
    pub label: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Alignment in frame units; `word_of_phone[i]` is the word holding phone `i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct FrameAlignment {
    pub words: Vec<FrameSpan>,
    pub phones: Vec<FrameSpan>,
    pub word_of_phone: Vec<usize>,
}

impl FrameAlignment {
    pub fn shifted(mut self, by: usize) -> FrameAlignment {
        for s in self.words.iter_mut().chain(self.phones.iter_mut()) {
            s.start += by;
            s.end += by;
        }
        self
    }

    /// Appends `other`, renumbering its word indices.
    pub fn append(&mut self, other: FrameAlignment) {
        let base = self.words.len();
        self.words.extend(other.words);
        self.phones.extend(other.phones);
        self.word_of_phone.extend(other.word_of_phone.into_iter().map(|w| w + base));
    }

    /// Words `[a, b)` with their phones.
    pub fn take_words(&self, a: usize, b: usize) -> FrameAlignment {
        let mut out = FrameAlignment {
            words: self.words[a..b].to_vec(),
            ..FrameAlignment::default()
        };
        for (p, &w) in self.phones.iter().zip(&self.word_of_phone) {
            if (a..b).contains(&w) {
                out.phones.push(p.clone());
                out.word_of_phone.push(w - a);
            }
        }
        out
    }

    pub fn to_seconds(&self, f: &FeatureMatrix, duration: f64) -> Alignment {
        let t = |k: usize| boundary_time(k, f.rows(), f.hop, f.win, duration);
        let conv = |s: &FrameSpan| AlignedInterval {
            label: s.label.clone(),
            start: t(s.start),
            end: t(s.end),
            score: s.score,
        };
        Alignment {
            words: self.words.iter().map(conv).collect(),
            phones: self.phones.iter().map(conv).collect(),
            duration,
            low_confidence: false,
        }
    }
}

impl Alignment {
    /// Checks ordering, positivity and nesting of the two tiers.
    pub fn validate(&self) -> Result<(), String> {
        for (name, tier) in [("word", &self.words), ("phone", &self.phones)] {
            for (i, iv) in tier.iter().enumerate() {
                if !(iv.start >= 0.0 && iv.start < iv.end && iv.end <= self.duration) {
                    return Err(format!("{name} {i} [{}, {}] is not a valid interval", iv.start, iv.end));
                }
                if i > 0 && tier[i - 1].end > iv.start {
                    return Err(format!("{name} {i} overlaps its predecessor"));
                }
            }
        }
        let mut p = 0;
        for (i, w) in self.words.iter().enumerate() {
            let first = p;
            while p < self.phones.len() && self.phones[p].end <= w.end && self.phones[p].start >= w.start {
                p += 1;
            }
            if first == p {
                return Err(format!("word {i} has no phones"));
            }
            if self.phones[first].start != w.start || self.phones[p - 1].end != w.end {
                return Err(format!("phones of word {i} do not span it exactly"));
            }
            for k in first + 1..p {
                if self.phones[k - 1].end != self.phones[k].start {
                    return Err(format!("gap inside word {i}"));
                }
            }
        }
        if p != self.phones.len() {
            return Err("phone outside every word".into());
        }
        Ok(())
    }

    /// Phone intervals of each word.
    pub fn phones_by_word(&self) -> Vec<&[AlignedInterval]> {
        let mut out = Vec::with_capacity(self.words.len());
        let mut p = 0;
        for w in &self.words {
            let first = p;
            while p < self.phones.len() && self.phones[p].end <= w.end {
                p += 1;
            }
            out.push(&self.phones[first..p]);
        }
        out
    }
}
