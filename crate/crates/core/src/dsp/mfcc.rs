use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioBuffer, DspError, FeatureMatrix};

/// Columns of the VAD feature vector: log-energy, zero-crossing rate,
/// spectral entropy, 13 static cepstra.
pub const VAD_DIM: usize = 16;

const MEL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub preemphasis: f64,
    /// Window length in samples.
    pub window: usize,
    /// Hop in samples.
    pub hop: usize,
    pub fft_size: usize,
    pub mel_filters: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub cepstra: usize,
    /// Regression half-width for deltas and delta-deltas.
    pub delta_window: usize,
    /// Lower bound for the natural-log frame energy.
    pub energy_floor: f64,
    pub cmvn: bool,
    /// Uniform dither amplitude; 0 disables it.
    pub dither: f64,
    pub dither_seed: u64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: 16000,
            preemphasis: 0.97,
            window: 400,
            hop: 160,
            fft_size: 512,
            mel_filters: 26,
            low_hz: 0.0,
            high_hz: 8000.0,
            cepstra: 13,
            delta_window: 2,
            energy_floor: -30.0,
            cmvn: false,
            dither: 0.0,
            dither_seed: 0,
        }
    }
}

impl MfccConfig {
    pub fn dim(&self) -> usize {
        self.cepstra * 3
    }

    fn params(&self) -> String {
        format!(
            "sr={},pre={},win={},hop={},fft={},mel={},band={}-{},ceps={},delta={},floor={},cmvn={},dither={}",
            self.sample_rate,
            self.preemphasis,
            self.window,
            self.hop,
            self.fft_size,
            self.mel_filters,
            self.low_hz,
            self.high_hz,
            self.cepstra,
            self.delta_window,
            self.energy_floor,
            u8::from(self.cmvn),
            self.dither
        )
    }

    pub fn fingerprint(&self) -> String {
        format!("mfcc:{}", self.params())
    }

    pub fn vad_fingerprint(&self) -> String {
        format!("vad:{}", self.params())
    }
}

/// Number of full frames in `n` samples.
pub fn frame_count(n: usize, window: usize, hop: usize) -> usize {
    if n < window {
        0
    } else {
        (n - window) / hop + 1
    }
}

fn hz_to_mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

struct Filter {
    first_bin: usize,
    weights: Vec<f64>,
}

/// Per-frame measurements before delta computation.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub log_energy: f64,
    pub zcr: f64,
    pub entropy: f64,
    /// Static cepstra, C0 replaced by the log-energy.
    pub cepstra: Vec<f64>,
}

/// Precomputed window, filterbank, DCT and FFT plan for one configuration.
pub struct Frontend {
    cfg: MfccConfig,
    window: Vec<f64>,
    filters: Vec<Filter>,
    centers_hz: Vec<f64>,
    dct: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Frontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frontend").field("cfg", &self.cfg).finish()
    }
}

impl Default for Frontend {
    fn default() -> Self {
        Frontend::new(MfccConfig::default())
    }
}

impl Frontend {
    pub fn new(cfg: MfccConfig) -> Frontend {
        let n = cfg.window;
        let window = (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos()).collect();

        let bins = cfg.fft_size / 2 + 1;
        let lo = hz_to_mel(cfg.low_hz);
        let hi = hz_to_mel(cfg.high_hz);
        let step = (hi - lo) / (cfg.mel_filters + 1) as f64;
        let edges: Vec<f64> = (0..cfg.mel_filters + 2).map(|i| lo + step * i as f64).collect();
        let bin_mel: Vec<f64> = (0..bins).map(|k| hz_to_mel(k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64)).collect();
        let mut filters = Vec::with_capacity(cfg.mel_filters);
        for j in 0..cfg.mel_filters {
            let (l, c, r) = (edges[j], edges[j + 1], edges[j + 2]);
            let w: Vec<f64> = bin_mel.iter().map(|&m| ((m - l) / (c - l)).min((r - m) / (r - c)).max(0.0)).collect();
            let first = w.iter().position(|&x| x > 0.0).unwrap_or(0);
            let last = w.iter().rposition(|&x| x > 0.0).map_or(first, |i| i + 1);
            filters.push(Filter {
                first_bin: first,
                weights: w[first..last].to_vec(),
            });
        }
        let centers_hz = edges[1..=cfg.mel_filters].iter().map(|&m| mel_to_hz(m)).collect();

        let m = cfg.mel_filters as f64;
        let mut dct = Vec::with_capacity(cfg.cepstra * cfg.mel_filters);
        for i in 0..cfg.cepstra {
            for j in 0..cfg.mel_filters {
                dct.push((2.0 / m).sqrt() * (PI * i as f64 * (j as f64 + 0.5) / m).cos());
            }
        }

        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Frontend {
            cfg,
            window,
            filters,
            centers_hz,
            dct,
            fft,
        }
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn filter_centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn frames(&self, n_samples: usize) -> usize {
        frame_count(n_samples, self.cfg.window, self.cfg.hop)
    }

    fn power_spectrum(&self, frame: &[f64], buf: &mut [Complex<f64>]) -> Vec<f64> {
        let a = self.cfg.preemphasis;
        for c in buf.iter_mut() {
            *c = Complex::new(0.0, 0.0);
        }
        for i in 0..frame.len() {
            let prev = if i == 0 { frame[0] } else { frame[i - 1] };
            buf[i].re = (frame[i] - a * prev) * self.window[i];
        }
        self.fft.process(buf);
        buf[..self.cfg.fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    fn mel_energies(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|f| f.weights.iter().zip(&power[f.first_bin..]).map(|(w, p)| w * p).sum())
            .collect()
    }

    /// Mel filterbank energies (linear scale) of one window of samples.
    pub fn filterbank(&self, frame: &[f32]) -> Vec<f64> {
        assert_eq!(frame.len(), self.cfg.window);
        let x: Vec<f64> = frame.iter().map(|&s| s as f64).collect();
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        self.mel_energies(&self.power_spectrum(&x, &mut buf))
    }

    fn samples(&self, audio: &AudioBuffer) -> Result<Vec<f64>, DspError> {
        if audio.samples.len() < self.cfg.window {
            return Err(DspError::TooShort {
                samples: audio.samples.len(),
                window: self.cfg.window,
            });
        }
        let mut x: Vec<f64> = audio.samples.iter().map(|&s| s as f64).collect();
        if self.cfg.dither > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.dither_seed);
            for v in &mut x {
                *v += rng.gen_range(-self.cfg.dither..=self.cfg.dither);
            }
        }
        Ok(x)
    }

    /// Static per-frame analysis.
    pub fn analyze(&self, audio: &AudioBuffer) -> Result<Vec<FrameAnalysis>, DspError> {
        let x = self.samples(audio)?;
        let t = self.frames(x.len());
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        let n_mel = self.cfg.mel_filters;
        let mut out = Vec::with_capacity(t);
        for f in 0..t {
            let frame = &x[f * self.cfg.hop..f * self.cfg.hop + self.cfg.window];
            let energy: f64 = frame.iter().map(|v| v * v).sum();
            let log_energy = if energy > 0.0 {
                energy.ln().max(self.cfg.energy_floor)
            } else {
                self.cfg.energy_floor
            };
            let crossings = frame.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count();
            let zcr = crossings as f64 / (frame.len() - 1) as f64;

            let power = self.power_spectrum(frame, &mut buf);
            let total: f64 = power.iter().sum();
            let entropy = if total > 0.0 {
                let h: f64 = power
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| {
                        let q = p / total;
                        -q * q.ln()
                    })
                    .sum();
                h / (power.len() as f64).ln()
            } else {
                1.0
            };

            let log_mel: Vec<f64> = self.mel_energies(&power).into_iter().map(|e| e.max(MEL_FLOOR).ln()).collect();
            let mut cepstra: Vec<f64> = (0..self.cfg.cepstra)
                .map(|i| self.dct[i * n_mel..(i + 1) * n_mel].iter().zip(&log_mel).map(|(a, b)| a * b).sum())
                .collect();
            if let Some(c0) = cepstra.first_mut() {
                *c0 = log_energy;
            }
            out.push(FrameAnalysis {
                log_energy,
                zcr,
                entropy,
                cepstra,
            });
        }
        Ok(out)
    }

    fn matrix(&self, rows: Vec<f64>, t: usize, d: usize, fingerprint: String) -> FeatureMatrix {
        let sr = self.cfg.sample_rate as f64;
        let mut m = FeatureMatrix::new(rows, t, d, self.cfg.hop as f64 / sr, self.cfg.window as f64 / sr, fingerprint);
        if self.cfg.cmvn {
            m.cmvn();
        }
        m
    }

    /// Static cepstra with deltas and delta-deltas: T x 3·cepstra.
    pub fn mfcc(&self, audio: &AudioBuffer) -> Result<FeatureMatrix, DspError> {
        let frames = self.analyze(audio)?;
        let statics: Vec<Vec<f64>> = frames.into_iter().map(|f| f.cepstra).collect();
        let d1 = deltas(&statics, self.cfg.delta_window);
        let d2 = deltas(&d1, self.cfg.delta_window);
        let t = statics.len();
        let dim = self.cfg.dim();
        let mut data = Vec::with_capacity(t * dim);
        for i in 0..t {
            data.extend_from_slice(&statics[i]);
            data.extend_from_slice(&d1[i]);
            data.extend_from_slice(&d2[i]);
        }
        Ok(self.matrix(data, t, dim, self.cfg.fingerprint()))
    }

    /// Frame features for the speech/non-speech classifier.
    pub fn vad_features(&self, audio: &AudioBuffer) -> Result<FeatureMatrix, DspError> {
        let frames = self.analyze(audio)?;
        let t = frames.len();
        let d = 3 + self.cfg.cepstra;
        let mut data = Vec::with_capacity(t * d);
        for f in frames {
            data.push(f.log_energy);
            data.push(f.zcr);
            data.push(f.entropy);
            data.extend_from_slice(&f.cepstra);
        }
        Ok(self.matrix(data, t, d, self.cfg.vad_fingerprint()))
    }
}

/// Regression deltas over ±`n` frames with edge replication.
pub fn deltas(x: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let t = x.len();
    if t == 0 {
        return Vec::new();
    }
    let d = x[0].len();
    let denom = 2.0 * (1..=n).map(|k| (k * k) as f64).sum::<f64>();
    (0..t)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let mut acc = 0.0;
                    for k in 1..=n {
                        let fwd = &x[(i + k).min(t - 1)];
                        let back = &x[i.saturating_sub(k)];
                        acc += k as f64 * (fwd[j] - back[j]);
                    }
                    acc / denom
                })
                .collect()
        })
        .collect()
}
