//! Frame-level voice activity detection: logistic posteriors, a
//! recall-biased threshold and segment smoothing.

use serde::{Deserialize, Serialize};

use crate::align::boundary_time;
use crate::dsp::{FeatureMatrix, VAD_DIM};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VadError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("no labeled frames")]
    Empty,
    #[error("{frames} frames but {labels} labels")]
    LabelCount { frames: usize, labels: usize },
    #[error("feature fingerprint {features:?} does not match model {model:?}")]
    FingerprintMismatch { model: String, features: String },
    #[error("feature dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bad vad model: {0}")]
    ModelFormat(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VadModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Posterior threshold, in (0, 1).
    pub threshold: f64,
    /// Per-column standardization applied before the weights.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadTrainConfig {
    pub recall_target: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for VadTrainConfig {
    fn default() -> Self {
        VadTrainConfig {
            recall_target: 0.99,
            learning_rate: 0.5,
            max_epochs: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadTrainReport {
    pub epochs: usize,
    pub loss: f64,
    /// False when the epoch budget ran out before the loss settled.
    pub converged: bool,
    pub recall: f64,
    pub precision: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl VadModel {
    pub fn posterior(&self, frame: &[f64]) -> f64 {
        let mut z = self.bias;
        for (j, &x) in frame.iter().enumerate() {
            z += self.weights[j] * (x - self.mean[j]) / self.scale[j];
        }
        sigmoid(z)
    }

    pub fn check_features(&self, f: &FeatureMatrix) -> Result<(), VadError> {
        if f.fingerprint != self.fingerprint {
            return Err(VadError::FingerprintMismatch {
                model: self.fingerprint.clone(),
                features: f.fingerprint.clone(),
            });
        }
        if f.cols() != self.weights.len() {
            return Err(VadError::DimensionMismatch {
                expected: self.weights.len(),
                got: f.cols(),
            });
        }
        Ok(())
    }

    pub fn posteriors(&self, f: &FeatureMatrix) -> Result<Vec<f64>, VadError> {
        self.check_features(f)?;
        Ok(f.iter_rows().map(|r| self.posterior(r)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<VadModel, VadError> {
        let m: VadModel = serde_json::from_str(s).map_err(|e| VadError::ModelFormat(e.to_string()))?;
        let n = m.weights.len();
        if m.mean.len() != n || m.scale.len() != n {
            return Err(VadError::ModelFormat("weight, mean and scale lengths differ".into()));
        }
        if !(m.threshold > 0.0 && m.threshold < 1.0) {
            return Err(VadError::ModelFormat("threshold outside (0, 1)".into()));
        }
        if m.weights.iter().chain(&m.mean).chain(&m.scale).any(|x| !x.is_finite()) || m.scale.iter().any(|&s| s <= 0.0) {
            return Err(VadError::ModelFormat("non-finite or non-positive parameters".into()));
        }
        Ok(m)
    }
}

/// Frame recall and precision of `posterior >= threshold` against labels.
pub fn recall_precision(posteriors: &[f64], labels: &[bool], threshold: f64) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &l) in posteriors.iter().zip(labels) {
        match (p >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    (recall, precision)
}

/// Largest threshold whose frame recall on `speech_posteriors` reaches
/// `target`.
pub fn recall_threshold(speech_posteriors: &[f64], target: f64) -> f64 {
    let mut s = speech_posteriors.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let need = ((target * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    s[n - need].clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Fits a logistic classifier by full-batch gradient descent on
/// standardized features, then picks the recall-biased threshold.
pub fn vad_train(labeled: &[(FeatureMatrix, Vec<bool>)], cfg: &VadTrainConfig) -> Result<(VadModel, VadTrainReport), VadError> {
    let first = labeled.first().ok_or(VadError::Empty)?;
    let dim = first.0.cols();
    let fingerprint = first.0.fingerprint.clone();
    let mut xs: Vec<&[f64]> = Vec::new();
    let mut ys: Vec<bool> = Vec::new();
    for (f, l) in labeled {
        if f.rows() != l.len() {
            return Err(VadError::LabelCount {
                frames: f.rows(),
                labels: l.len(),
            });
        }
        if f.cols() != dim {
            return Err(VadError::DimensionMismatch { expected: dim, got: f.cols() });
        }
        if f.fingerprint != fingerprint {
            return Err(VadError::FingerprintMismatch {
                model: fingerprint,
                features: f.fingerprint.clone(),
            });
        }
        xs.extend(f.iter_rows());
        ys.extend(l);
    }
    if xs.is_empty() {
        return Err(VadError::Empty);
    }
    if ys.iter().all(|&y| y) || ys.iter().all(|&y| !y) {
        return Err(VadError::SingleClass);
    }

    let n = xs.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in &xs {
        for j in 0..dim {
            mean[j] += x[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut scale = vec![0.0; dim];
    for x in &xs {
        for j in 0..dim {
            scale[j] += (x[j] - mean[j]).powi(2);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / n).sqrt();
        if *s < 1e-8 {
            *s = 1.0;
        }
    }
    let z: Vec<Vec<f64>> = xs.iter().map(|x| (0..dim).map(|j| (x[j] - mean[j]) / scale[j]).collect()).collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut prev = f64::INFINITY;
    let mut loss = f64::INFINITY;
    let mut epochs = 0;
    let mut converged = false;
    while epochs < cfg.max_epochs {
        epochs += 1;
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        loss = 0.0;
        for (x, &y) in z.iter().zip(&ys) {
            let s = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let p = sigmoid(s);
            let t = if y { 1.0 } else { 0.0 };
            // log(1 + e^s) - t·s, computed stably
            loss += s.max(0.0) + (-s.abs()).exp().ln_1p() - t * s;
            let g = p - t;
            gb += g;
            for j in 0..dim {
                gw[j] += g * x[j];
            }
        }
        loss /= n;
        for j in 0..dim {
            w[j] -= cfg.learning_rate * gw[j] / n;
        }
        b -= cfg.learning_rate * gb / n;
        if (prev - loss).abs() < cfg.tolerance {
            converged = true;
            break;
        }
        prev = loss;
    }

    let mut model = VadModel {
        weights: w,
        bias: b,
        threshold: 0.5,
        mean,
        scale,
        fingerprint,
    };
    let post: Vec<f64> = xs.iter().map(|x| model.posterior(x)).collect();
    let speech: Vec<f64> = post.iter().zip(&ys).filter(|(_, &y)| y).map(|(&p, _)| p).collect();
    model.threshold = recall_threshold(&speech, cfg.recall_target);
    let (recall, precision) = recall_precision(&post, &ys, model.threshold);
    if !converged {
        tracing::warn!(epochs, loss, "vad training stopped before convergence");
    }
    Ok((
        model,
        VadTrainReport {
            epochs,
            loss,
            converged,
            recall,
            precision,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Speech,
    Nonspeech,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Speech => "speech",
            SegmentKind::Nonspeech => "nonspeech",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub kind: SegmentKind,
    /// Frame range `[first_frame, last_frame)`.
    pub first_frame: usize,
    pub last_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentList {
    pub segments: Vec<Segment>,
    pub duration: f64,
}

impl SegmentList {
    pub fn speech(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.kind == SegmentKind::Speech)
    }

    /// Checks the partition invariant.
    pub fn validate(&self) -> Result<(), String> {
        let Some(first) = self.segments.first() else {
            return if self.duration == 0.0 { Ok(()) } else { Err("no segments".into()) };
        };
        if first.start != 0.0 || first.first_frame != 0 {
            return Err("first segment does not start at 0".into());
        }
        for w in self.segments.windows(2) {
            if w[0].end != w[1].start || w[0].last_frame != w[1].first_frame {
                return Err(format!("gap or overlap at {}", w[0].end));
            }
            if w[0].kind == w[1].kind {
                return Err(format!("kinds do not alternate at {}", w[0].end));
            }
        }
        if self.segments.iter().any(|s| s.start >= s.end) {
            return Err("empty segment".into());
        }
        if self.segments.last().unwrap().end != self.duration {
            return Err("last segment does not end at the duration".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    /// Odd median-filter length in frames.
    pub median: usize,
    /// Speech extension after every speech run, in seconds.
    pub hangover: f64,
    pub min_speech: f64,
    pub min_nonspeech: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing {
            median: 11,
            hangover: 0.2,
            min_speech: 0.1,
            min_nonspeech: 0.2,
        }
    }
}

fn runs(x: &[bool]) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < x.len() {
        let mut j = i + 1;
        while j < x.len() && x[j] == x[i] {
            j += 1;
        }
        out.push((i, j, x[i]));
        i = j;
    }
    out
}

/// Majority over a centered window, truncated at the edges; ties favour
/// speech.
fn median_filter(x: &[bool], len: usize) -> Vec<bool> {
    let half = len / 2;
    let mut prefix = vec![0usize; x.len() + 1];
    for (i, &v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v as usize;
    }
    (0..x.len())
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(x.len());
            2 * (prefix[b] - prefix[a]) >= b - a
        })
        .collect()
}

/// Binary speech decisions after median, hangover and minimum durations.
pub fn smooth_decisions(raw: &[bool], hop: f64, cfg: &Smoothing) -> Vec<bool> {
    let frames = |s: f64| (s / hop).round() as usize;
    let mut x = if cfg.median > 1 { median_filter(raw, cfg.median) } else { raw.to_vec() };
    let hang = frames(cfg.hangover);
    if hang > 0 {
        let mut y = x.clone();
        for (_, end, speech) in runs(&x) {
            if speech {
                for v in y.iter_mut().skip(end).take(hang) {
                    *v = true;
                }
            }
        }
        x = y;
    }
    let rs = runs(&x);
    let min_ns = frames(cfg.min_nonspeech);
    if rs.len() > 1 {
        for &(a, b, speech) in &rs {
            if !speech && b - a < min_ns {
                x[a..b].iter_mut().for_each(|v| *v = true);
            }
        }
    }
    let min_sp = frames(cfg.min_speech);
    for (a, b, speech) in runs(&x) {
        if speech && b - a < min_sp {
            x[a..b].iter_mut().for_each(|v| *v = false);
        }
    }
    x
}

/// Turns per-frame decisions into a partition of `[0, duration]`.
pub fn segments_from_decisions(x: &[bool], hop: f64, win: f64, duration: f64) -> SegmentList {
    let t = x.len();
    let segments = runs(x)
        .into_iter()
        .map(|(a, b, speech)| Segment {
            start: boundary_time(a, t, hop, win, duration),
            end: boundary_time(b, t, hop, win, duration),
            kind: if speech { SegmentKind::Speech } else { SegmentKind::Nonspeech },
            first_frame: a,
            last_frame: b,
        })
        .collect();
    SegmentList { segments, duration }
}

/// Segments speech from posteriors already computed for `f`.
pub fn segment_posteriors(posteriors: &[f64], threshold: f64, f: &FeatureMatrix, duration: f64, cfg: &Smoothing) -> SegmentList {
    let raw: Vec<bool> = posteriors.iter().map(|&p| p >= threshold).collect();
    let x = smooth_decisions(&raw, f.hop, cfg);
    segments_from_decisions(&x, f.hop, f.win, duration)
}

pub fn vad_segment(f: &FeatureMatrix, model: &VadModel, duration: f64, cfg: &Smoothing) -> Result<SegmentList, VadError> {
    let post = model.posteriors(f)?;
    Ok(segment_posteriors(&post, model.threshold, f, duration, cfg))
}

/// Untrained model that thresholds standardized log-energy (column 0).
/// Useful when no trained model is at hand.
pub fn energy_model(fingerprint: impl Into<String>, threshold_db_above_floor: f64) -> VadModel {
    let mut weights = vec![0.0; VAD_DIM];
    weights[0] = 4.0;
    VadModel {
        weights,
        bias: 0.0,
        threshold: 0.5,
        // posterior 0.5 where log-energy sits `threshold` above the floor
        mean: {
            let mut m = vec![0.0; VAD_DIM];
            m[0] = -30.0 + threshold_db_above_floor;
            m
        },
        scale: vec![1.0; VAD_DIM],
        fingerprint: fingerprint.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fm(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows, 0.01, 0.025, "toy")
    }

    #[test]
    fn separable_toy_reaches_full_recall_and_precision() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let speech = i % 2 == 0;
            rows.push(vec![if speech { 3.0 } else { -3.0 } + (i as f64) * 0.01, 0.5]);
            labels.push(speech);
        }
        let (m, r) = vad_train(&[(fm(rows), labels)], &VadTrainConfig::default()).unwrap();
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.precision, 1.0);
        assert!(m.threshold > 0.0 && m.threshold < 1.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let f = fm(vec![vec![1.0]; 5]);
        assert_eq!(vad_train(&[(f, vec![true; 5])], &VadTrainConfig::default()).unwrap_err(), VadError::SingleClass);
    }

    #[test]
    fn threshold_hits_target_exactly() {
        let p: Vec<f64> = (1..=200).map(|i| i as f64 / 201.0).collect();
        let th = recall_threshold(&p, 0.99);
        // 198 of 200 frames are needed
        assert_eq!(th, 3.0 / 201.0);
    }

    #[test]
    fn all_speech_and_all_silence() {
        let f = fm(vec![vec![0.0]; 300]);
        let dur = 3.015;
        let s = segment_posteriors(&vec![0.9; 300], 0.5, &f, dur, &Smoothing::default());
        assert_eq!(s.segments.len(), 1);
        assert_eq!(s.segments[0].kind, SegmentKind::Speech);
        assert_eq!((s.segments[0].start, s.segments[0].end), (0.0, dur));
        let s = segment_posteriors(&vec![0.1; 300], 0.5, &f, dur, &Smoothing::default());
        assert_eq!(s.segments[0].kind, SegmentKind::Nonspeech);
        assert_eq!(s.segments.len(), 1);
    }

    #[test]
    fn model_json_round_trip() {
        let m = energy_model("vad:x", 6.0);
        assert_eq!(VadModel::from_json(&m.to_json()).unwrap(), m);
        assert!(VadModel::from_json("{}").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn segments_partition_and_respect_minimums(p in proptest::collection::vec(0.0f64..1.0, 1..600)) {
            let f = fm(vec![vec![0.0]; p.len()]);
            let dur = (p.len() - 1) as f64 * 0.01 + 0.025;
            let s = segment_posteriors(&p, 0.5, &f, dur, &Smoothing::default());
            prop_assert!(s.validate().is_ok(), "{:?}", s.validate());
            if s.segments.len() > 1 {
                for seg in &s.segments {
                    let n = seg.last_frame - seg.first_frame;
                    match seg.kind {
                        SegmentKind::Speech => prop_assert!(n >= 10),
                        SegmentKind::Nonspeech => prop_assert!(n >= 20),
                    }
                }
            }
        }

        #[test]
        fn hangover_only_extends(p in proptest::collection::vec(0.0f64..1.0, 1..400)) {
            let raw: Vec<bool> = p.iter().map(|&v| v >= 0.5).collect();
            let with = smooth_decisions(&raw, 0.01, &Smoothing::default());
            let without = smooth_decisions(&raw, 0.01, &Smoothing { hangover: 0.0, ..Smoothing::default() });
            for (a, b) in with.iter().zip(&without) {
                prop_assert!(*a || !*b);
            }
        }

        #[test]
        fn lower_threshold_never_loses_recall(
            p in proptest::collection::vec(0.0f64..1.0, 1..200),
            l in proptest::collection::vec(any::<bool>(), 200),
            a in 0.0f64..1.0, b in 0.0f64..1.0,
        ) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let l = &l[..p.len()];
            prop_assert!(recall_precision(&p, l, lo).0 >= recall_precision(&p, l, hi).0);
        }
    }
}
