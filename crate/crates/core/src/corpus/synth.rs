//! Synthetic speech-like audio with exact ground truth.
//!
//! Each pseudo-phone is a fixed recipe: formant-like resonances excited
//! by a harmonic source for sonorants and vowels, high-passed noise for
//! `s`. A voice sets the pitch and scales the formants. Each phone fades
//! in and out over 3 ms so boundaries carry no clicks. Every word of the generated vocabulary is spelled with
//! letters that the g2p rules map one-to-one onto these phones.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::am::{Unit, Utterance};
use crate::dsp::{AudioBuffer, DspError, Frontend, SAMPLE_RATE};

/// Phones the generator can render.
pub const SYNTH_PHONES: &[&str] = &["a", "o", "e", "u", "m", "n", "l", "s"];
const VOWELS: &[&str] = &["a", "o", "e", "u"];
const CONSONANTS: &[&str] = &["m", "n", "l", "s"];

const FADE: usize = 48;
const NOISE_FLOOR: f64 = 0.002;

fn recipe(phone: &str) -> Option<&'static [(f64, f64)]> {
    Some(match phone {
        "a" => &[(700.0, 0.25), (1200.0, 0.18), (2600.0, 0.05)],
        "o" => &[(450.0, 0.25), (850.0, 0.18), (2500.0, 0.04)],
        "e" => &[(450.0, 0.22), (1950.0, 0.15), (2700.0, 0.05)],
        "u" => &[(320.0, 0.25), (750.0, 0.10), (2300.0, 0.03)],
        "m" => &[(250.0, 0.20), (1100.0, 0.02)],
        "n" => &[(280.0, 0.18), (1700.0, 0.04)],
        "l" => &[(380.0, 0.20), (1300.0, 0.08), (2900.0, 0.03)],
        "s" => &[],
        _ => return None,
    })
}

/// Speaker characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Voice {
    /// Multiplies every frequency.
    pub scale: f64,
    /// Multiplies every amplitude.
    pub gain: f64,
    /// Fundamental frequency in Hz.
    pub pitch: f64,
}

impl Default for Voice {
    fn default() -> Self {
        Voice {
            scale: 1.0,
            gain: 1.0,
            pitch: 120.0,
        }
    }
}

const RESONANCE_BW: f64 = 120.0;
const TOP_HARMONIC_HZ: f64 = 7000.0;

/// A labeled time span of the construction recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub audio: AudioBuffer,
    pub text: String,
    pub words: Vec<Truth>,
    pub phones: Vec<Truth>,
}

impl SynthUtterance {
    /// Unit sequence of the recipe, with `sil` at both ends and in every
    /// pause between words.
    pub fn units(&self) -> Vec<Unit> {
        let mut out = vec![Unit::Sil];
        let mut prev_end = None;
        for p in &self.phones {
            if prev_end.is_some_and(|e| p.start > e) {
                out.push(Unit::Sil);
            }
            out.push(p.label.parse().expect("synthetic phones are in the inventory"));
            prev_end = Some(p.end);
        }
        out.push(Unit::Sil);
        out
    }

    /// Features paired with [`SynthUtterance::units`].
    pub fn training(&self, frontend: &Frontend) -> Result<Utterance, DspError> {
        Ok(Utterance {
            features: frontend.mfcc(&self.audio)?,
            units: self.units(),
        })
    }

    pub fn word_labels(&self) -> Vec<String> {
        self.words.iter().map(|w| w.label.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtteranceShape {
    /// Leading and trailing silence range in seconds.
    pub edge_silence: (f64, f64),
    /// Probability of a pause between two words.
    pub pause_prob: f64,
    pub pause: (f64, f64),
    pub vowel_dur: (f64, f64),
    pub consonant_dur: (f64, f64),
}

impl UtteranceShape {
    /// Edge silences about one phone long. Flat-start training splits each
    /// utterance uniformly, so long edge silences would push every initial
    /// boundary early and training keeps part of that shift.
    pub fn training() -> UtteranceShape {
        UtteranceShape {
            edge_silence: (0.08, 0.12),
            ..UtteranceShape::default()
        }
    }
}

impl Default for UtteranceShape {
    fn default() -> Self {
        UtteranceShape {
            edge_silence: (0.15, 0.4),
            pause_prob: 0.3,
            pause: (0.05, 0.2),
            vowel_dur: (0.08, 0.16),
            consonant_dur: (0.05, 0.11),
        }
    }
}

/// Deterministic generator; identical seeds give identical audio.
pub struct Synth {
    rng: ChaCha8Rng,
    pub shape: UtteranceShape,
}

fn secs(n: usize) -> f64 {
    n as f64 / SAMPLE_RATE as f64
}

impl Synth {
    pub fn new(seed: u64) -> Synth {
        Synth {
            rng: ChaCha8Rng::seed_from_u64(seed),
            shape: UtteranceShape::default(),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn samples_in(&mut self, range: (f64, f64)) -> usize {
        let s = self.rng.gen_range(range.0..=range.1);
        (s * SAMPLE_RATE as f64).round() as usize
    }

    /// Low-level background noise.
    pub fn silence(&mut self, n: usize) -> Vec<f64> {
        let g = Normal::new(0.0, NOISE_FLOOR).unwrap();
        (0..n).map(|_| g.sample(&mut self.rng)).collect()
    }

    /// `n` samples of one pseudo-phone. Panics on phones without a recipe.
    pub fn phone(&mut self, phone: &str, n: usize, voice: Voice) -> Vec<f64> {
        let parts = recipe(phone).unwrap_or_else(|| panic!("no synthetic recipe for {phone:?}"));
        let mut out = self.silence(n);
        if parts.is_empty() {
            let g = Normal::new(0.0, 0.08 * voice.gain).unwrap();
            let mut prev = 0.0;
            for v in out.iter_mut() {
                let w = g.sample(&mut self.rng);
                *v += w - prev;
                prev = w;
            }
            return out;
        }
        let formants: Vec<(f64, f64)> = parts
            .iter()
            .map(|&(f, a)| (f * voice.scale * (1.0 + self.rng.gen_range(-0.02..0.02)), a * self.rng.gen_range(0.85..1.15)))
            .collect();
        // pitch glides and loudness drifts across the phone
        let f0a = voice.pitch * (1.0 + self.rng.gen_range(-0.06..0.06));
        let f0b = voice.pitch * (1.0 + self.rng.gen_range(-0.06..0.06));
        let (ga, gb) = (self.rng.gen_range(0.7..1.3), self.rng.gen_range(0.7..1.3));
        let f0 = 0.5 * (f0a + f0b);
        // each harmonic takes the resonance envelope at its frequency, then
        // the whole set is rescaled to the power of the formant recipe
        let bw = RESONANCE_BW * voice.scale;
        let mut harmonics: Vec<(f64, f64)> = (1..)
            .map(|k| k as f64)
            .take_while(|&k| k * f0a.max(f0b) < TOP_HARMONIC_HZ)
            .map(|k| {
                let f = k * f0;
                let env: f64 = formants.iter().map(|&(fc, a)| a / (1.0 + ((f - fc) / bw).powi(2))).sum();
                (k, env)
            })
            .collect();
        let target: f64 = formants.iter().map(|(_, a)| a * a).sum();
        let have: f64 = harmonics.iter().map(|(_, a)| a * a).sum();
        let norm = voice.gain * (target / have).sqrt();
        for (_, a) in harmonics.iter_mut() {
            *a *= norm;
        }
        let phases: Vec<f64> = harmonics.iter().map(|_| self.rng.gen_range(0.0..2.0 * PI)).collect();
        let mut phi = 0.0;
        let last = n.saturating_sub(1).max(1) as f64;
        for (i, v) in out.iter_mut().enumerate() {
            let x = i as f64 / last;
            phi += 2.0 * PI * (f0a + (f0b - f0a) * x) / SAMPLE_RATE as f64;
            let g = ga + (gb - ga) * x;
            let s: f64 = harmonics.iter().zip(&phases).map(|(&(k, a), &p)| a * (k * phi + p).sin()).sum();
            *v += g * s;
        }
        out
    }

    fn duration(&mut self, phone: &str) -> usize {
        let r = if VOWELS.contains(&phone) {
            self.shape.vowel_dur
        } else {
            self.shape.consonant_dur
        };
        self.samples_in(r)
    }

    /// Renders words (each a string of synthetic phone letters) with
    /// silence at both ends and random pauses.
    pub fn utterance(&mut self, words: &[&str], voice: Voice) -> SynthUtterance {
        let mut pieces: Vec<(Option<String>, Vec<f64>)> = Vec::new();
        let mut word_spans: Vec<(String, usize, usize)> = Vec::new();
        let edge = self.shape.edge_silence;
        let n = self.samples_in(edge);
        pieces.push((None, self.silence(n)));
        for (wi, w) in words.iter().enumerate() {
            if wi > 0 && self.rng.gen_bool(self.shape.pause_prob) {
                let n = self.samples_in(self.shape.pause);
                pieces.push((None, self.silence(n)));
            }
            let first = pieces.len();
            for c in w.chars() {
                let p = c.to_string();
                let n = self.duration(&p);
                let audio = self.phone(&p, n, voice);
                pieces.push((Some(p), audio));
            }
            word_spans.push((w.to_string(), first, pieces.len()));
        }
        let n = self.samples_in(edge);
        pieces.push((None, self.silence(n)));

        let mut starts = Vec::with_capacity(pieces.len() + 1);
        let mut total = 0;
        for (_, a) in &pieces {
            starts.push(total);
            total += a.len();
        }
        starts.push(total);
        let mut samples = vec![0.0f64; total];
        for (k, (_, a)) in pieces.iter().enumerate() {
            let s0 = starts[k];
            for (i, &v) in a.iter().enumerate() {
                // raised-cosine ramps at both ends of each piece
                let edge_dist = i.min(a.len() - 1 - i);
                let g = if edge_dist < FADE {
                    0.5 - 0.5 * (PI * (edge_dist as f64 + 0.5) / FADE as f64).cos()
                } else {
                    1.0
                };
                samples[s0 + i] += v * g;
            }
        }
        let phones = pieces
            .iter()
            .enumerate()
            .filter_map(|(k, (p, _))| {
                p.as_ref().map(|p| Truth {
                    label: p.clone(),
                    start: secs(starts[k]),
                    end: secs(starts[k + 1]),
                })
            })
            .collect();
        let words_t = word_spans
            .into_iter()
            .map(|(w, a, b)| Truth {
                label: w,
                start: secs(starts[a]),
                end: secs(starts[b]),
            })
            .collect();
        SynthUtterance {
            audio: AudioBuffer::new(samples.into_iter().map(|v| v as f32).collect(), SAMPLE_RATE).expect("finite synthesis"),
            text: words.join(" "),
            words: words_t,
            phones,
        }
    }

    /// Random words over the given phone letters: 1-3 syllables of shape
    /// (C)V(C) without vowel hiatus, distinct, in generation order.
    pub fn vocabulary(&mut self, n: usize, vowels: &[&str], consonants: &[&str]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut guard = 0;
        while out.len() < n && guard < n * 1000 {
            guard += 1;
            let syl = self.rng.gen_range(1..=3);
            let mut w = String::new();
            for i in 0..syl {
                // vowel-vowel sequences would hit digraph rules (au, eu)
                if i > 0 || self.rng.gen_bool(0.8) {
                    w.push_str(consonants.choose(&mut self.rng).unwrap());
                }
                w.push_str(vowels.choose(&mut self.rng).unwrap());
            }
            if self.rng.gen_bool(0.4) {
                w.push_str(consonants.choose(&mut self.rng).unwrap());
            }
            if !out.contains(&w) {
                out.push(w);
            }
        }
        out
    }

    pub fn default_vocabulary(&mut self, n: usize) -> Vec<String> {
        self.vocabulary(n, VOWELS, CONSONANTS)
    }

    /// Pick `k` words uniformly from `vocab`.
    pub fn sentence<'a>(&mut self, vocab: &'a [String], k: usize) -> Vec<&'a str> {
        (0..k).map(|_| vocab.choose(&mut self.rng).unwrap().as_str()).collect()
    }
}

/// One speaker turn of a [`Synth::conversation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: usize,
    pub start: f64,
    pub end: f64,
}

impl Synth {
    /// Back-to-back turns of `words_per_turn` words; turn `i` is spoken by
    /// `voices[i % voices.len()]`. Turns abut with only short edge silences.
    pub fn conversation(&mut self, vocab: &[String], voices: &[Voice], turns: usize, words_per_turn: usize) -> (AudioBuffer, Vec<Turn>) {
        let saved = self.shape;
        self.shape.edge_silence = (0.01, 0.03);
        self.shape.pause_prob = 0.0;
        let mut samples: Vec<f32> = Vec::new();
        let mut out = Vec::new();
        for i in 0..turns {
            let words = self.sentence(vocab, words_per_turn);
            let u = self.utterance(&words, voices[i % voices.len()]);
            let start = secs(samples.len());
            samples.extend_from_slice(&u.audio.samples);
            out.push(Turn {
                speaker: i % voices.len(),
                start,
                end: secs(samples.len()),
            });
        }
        self.shape = saved;
        (AudioBuffer::new(samples, SAMPLE_RATE).expect("finite synthesis"), out)
    }
}

/// Random voice with a frequency scale in `[lo, hi]`; pitch follows the
/// scale loosely.
pub fn random_voice<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Voice {
    let scale = rng.gen_range(lo..=hi);
    Voice {
        scale,
        gain: rng.gen_range(0.8..=1.2),
        pitch: 130.0 * scale * rng.gen_range(0.85..=1.15),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_tiles_the_speech() {
        let mut s = Synth::new(1);
        let u = s.utterance(&["sama", "mas"], Voice::default());
        assert_eq!(u.phones.len(), 7);
        assert_eq!(u.words.len(), 2);
        assert_eq!(u.words[0].start, u.phones[0].start);
        assert_eq!(u.words[0].end, u.phones[3].end);
        for w in u.phones.windows(2) {
            assert!(w[0].end <= w[1].start);
        }
        assert!(u.words[1].end < u.audio.duration());
        assert!(u.audio.samples.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn deterministic_and_vocab_is_transcribable() {
        let a = Synth::new(9).utterance(&["lemon"], Voice::default());
        let b = Synth::new(9).utterance(&["lemon"], Voice::default());
        assert_eq!(a.audio, b.audio);
        let mut s = Synth::new(3);
        let g = crate::g2p::G2p::shared();
        for w in s.default_vocabulary(50) {
            let p = g.transcribe_word(&w).unwrap();
            assert_eq!(p[0].len(), w.chars().count(), "{w}");
        }
    }
}
