//! Audio ingestion and acoustic front-end.

mod featio;
mod mfcc;
mod wav;

pub use featio::{read_features, write_features, FEATURE_MAGIC};
pub use mfcc::{frame_count, Frontend, MfccConfig, VAD_DIM};
pub use wav::{load_wav, load_wav_bytes, wav_bytes, wav_info, write_wav};

use serde::{Deserialize, Serialize};

pub const SAMPLE_RATE: u32 = 16000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("unsupported audio format: {sample_rate} Hz, {bits_per_sample} bit, {channels} channel(s){}", if *.float { ", float" } else { "" })]
    UnsupportedFormat {
        sample_rate: u32,
        bits_per_sample: u16,
        channels: u16,
        float: bool,
    },
    #[error("corrupt audio file: {0}")]
    CorruptFile(String),
    #[error("audio too short: {samples} samples, need at least {window}")]
    TooShort { samples: usize, window: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid feature file: {0}")]
    BadFeatureFile(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Mono audio in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<AudioBuffer, DspError> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(AudioBuffer { samples, sample_rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample range `[start, end)` as a new buffer; bounds are clamped.
    pub fn slice(&self, start: usize, end: usize) -> AudioBuffer {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        AudioBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// (min, max) sample over each of `bins` equal ranges, for waveform overviews.
    pub fn peaks(&self, bins: usize) -> Vec<(f32, f32)> {
        if bins == 0 || self.samples.is_empty() {
            return Vec::new();
        }
        let n = self.samples.len();
        (0..bins)
            .map(|b| {
                let lo = b * n / bins;
                let hi = ((b + 1) * n / bins).max(lo + 1).min(n);
                self.samples[lo..hi]
                    .iter()
                    .fold((f32::INFINITY, f32::NEG_INFINITY), |(mn, mx), &s| (mn.min(s), mx.max(s)))
            })
            .collect()
    }
}

/// T x D row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    /// Frame hop in seconds.
    pub hop: f64,
    /// Frame length in seconds.
    pub win: f64,
    /// Describes the front-end configuration that produced the features.
    pub fingerprint: String,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize, hop: f64, win: f64, fingerprint: impl Into<String>) -> FeatureMatrix {
        assert_eq!(data.len(), rows * cols, "feature data does not match shape");
        FeatureMatrix {
            data,
            rows,
            cols,
            hop,
            win,
            fingerprint: fingerprint.into(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], hop: f64, win: f64, fingerprint: impl Into<String>) -> FeatureMatrix {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged feature rows");
            data.extend_from_slice(r);
        }
        FeatureMatrix::new(data, rows.len(), cols, hop, win, fingerprint)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |t| self.row(t))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frames `[start, end)` with the same metadata.
    pub fn slice(&self, start: usize, end: usize) -> FeatureMatrix {
        let end = end.min(self.rows);
        let start = start.min(end);
        FeatureMatrix {
            data: self.data[start * self.cols..end * self.cols].to_vec(),
            rows: end - start,
            cols: self.cols,
            hop: self.hop,
            win: self.win,
            fingerprint: self.fingerprint.clone(),
        }
    }

    /// Per-column mean 0, variance 1. Constant columns are only centered.
    pub fn cmvn(&mut self) {
        if self.rows == 0 {
            return;
        }
        let n = self.rows as f64;
        for c in 0..self.cols {
            let mean = (0..self.rows).map(|t| self.data[t * self.cols + c]).sum::<f64>() / n;
            let var = (0..self.rows).map(|t| (self.data[t * self.cols + c] - mean).powi(2)).sum::<f64>() / n;
            let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
            for t in 0..self.rows {
                let v = &mut self.data[t * self.cols + c];
                *v = (*v - mean) * scale;
            }
        }
    }
}
