//! Speaker change detection with the Bayesian information criterion and
//! agglomerative clustering of the resulting segments.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::boundary_time;
use crate::dsp::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiarizeError {
    #[error("{frames} frames, change detection needs at least {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("covariance stays singular after regularization")]
    SingularCovariance,
    #[error("empty span")]
    Empty,
}

/// Frame count, mean and maximum-likelihood covariance of a span.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussStats {
    pub n: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Added to the diagonal when a covariance is not positive definite.
pub const REGULARIZATION: f64 = 1e-6;

impl GaussStats {
    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a [f64]>) -> Result<GaussStats, DiarizeError> {
        let rows: Vec<&[f64]> = frames.into_iter().collect();
        let n = rows.len();
        let d = rows.first().ok_or(DiarizeError::Empty)?.len();
        let mut mean = DVector::zeros(d);
        for r in &rows {
            mean += DVector::from_column_slice(r);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for r in &rows {
            let c = DVector::from_column_slice(r) - &mean;
            cov += &c * c.transpose();
        }
        cov /= n as f64;
        Ok(GaussStats { n, mean, cov })
    }

    /// Statistics of the union of two spans.
    pub fn merge(&self, other: &GaussStats) -> GaussStats {
        let n = self.n + other.n;
        let (a, b) = (self.n as f64 / n as f64, other.n as f64 / n as f64);
        let mean = &self.mean * a + &other.mean * b;
        let da = &self.mean - &mean;
        let db = &other.mean - &mean;
        let cov = (&self.cov + &da * da.transpose()) * a + (&other.cov + &db * db.transpose()) * b;
        GaussStats { n, mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `log |Σ|`, regularized once if needed.
    pub fn log_det(&self) -> Result<f64, DiarizeError> {
        let chol = |m: DMatrix<f64>| m.cholesky().map(|c| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>());
        if let Some(v) = chol(self.cov.clone()) {
            return Ok(v);
        }
        let d = self.dim();
        chol(&self.cov + DMatrix::identity(d, d) * REGULARIZATION).ok_or(DiarizeError::SingularCovariance)
    }
}

/// BIC penalty for one extra full-covariance Gaussian over `n` frames.
pub fn bic_penalty(d: usize, n: usize, lambda: f64) -> f64 {
    let d = d as f64;
    lambda * 0.5 * (d + d * (d + 1.0) / 2.0) * (n as f64).ln()
}

/// Positive values favour two separate Gaussians.
pub fn delta_bic(left: &GaussStats, right: &GaussStats, lambda: f64) -> Result<f64, DiarizeError> {
    if left.n == 0 || right.n == 0 {
        return Err(DiarizeError::Empty);
    }
    let all = left.merge(right);
    let n = all.n as f64;
    Ok(n / 2.0 * all.log_det()? - left.n as f64 / 2.0 * left.log_det()? - right.n as f64 / 2.0 * right.log_det()? - bic_penalty(left.dim(), all.n, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiarizeConfig {
    /// Smallest span on either side of a change, in frames.
    pub min_window: usize,
    pub grow: usize,
    pub max_window: usize,
    pub lambda: f64,
    /// Leading feature columns used (the static cepstra).
    pub dims: usize,
}

impl Default for DiarizeConfig {
    fn default() -> Self {
        DiarizeConfig {
            min_window: 100,
            grow: 50,
            max_window: 1000,
            lambda: 1.0,
            dims: 13,
        }
    }
}

/// Running sums for O(D²) span statistics.
struct Prefix {
    d: usize,
    s1: Vec<DVector<f64>>,
    s2: Vec<DMatrix<f64>>,
}

impl Prefix {
    fn new(f: &FeatureMatrix, dims: usize) -> Prefix {
        let d = dims.min(f.cols());
        let mut s1 = vec![DVector::zeros(d)];
        let mut s2 = vec![DMatrix::zeros(d, d)];
        for t in 0..f.rows() {
            let x = DVector::from_column_slice(&f.row(t)[..d]);
            s2.push(&s2[t] + &x * x.transpose());
            s1.push(&s1[t] + x);
        }
        Prefix { d, s1, s2 }
    }

    fn stats(&self, a: usize, b: usize) -> GaussStats {
        let n = b - a;
        let mean = (&self.s1[b] - &self.s1[a]) / n as f64;
        let mut cov = (&self.s2[b] - &self.s2[a]) / n as f64 - &mean * mean.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        debug_assert_eq!(cov.nrows(), self.d);
        GaussStats { n, mean, cov }
    }
}

/// Best split of `[a, b)` with at least `min` frames per side. Ties go
/// to the earliest frame.
fn best_split(p: &Prefix, a: usize, b: usize, cfg: &DiarizeConfig) -> Result<Option<(usize, f64)>, DiarizeError> {
    if b - a < 2 * cfg.min_window {
        return Ok(None);
    }
    let scores: Vec<(usize, f64)> = (a + cfg.min_window..=b - cfg.min_window)
        .into_par_iter()
        .map(|c| delta_bic(&p.stats(a, c), &p.stats(c, b), cfg.lambda).map(|v| (c, v)))
        .collect::<Result<_, _>>()?;
    let mut best: Option<(usize, f64)> = None;
    for (c, v) in scores {
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((c, v));
        }
    }
    Ok(best)
}

/// Change frames inside `[a, b)` of `f`: growing-window ΔBIC scan.
pub fn detect_changes_in(f: &FeatureMatrix, a: usize, b: usize, cfg: &DiarizeConfig) -> Result<Vec<usize>, DiarizeError> {
    let needed = 2 * cfg.min_window;
    if b - a < needed {
        return Err(DiarizeError::TooShort { frames: b - a, needed });
    }
    let p = Prefix::new(f, cfg.dims);
    let mut out = Vec::new();
    let mut start = a;
    let mut end = a + needed;
    loop {
        if let Some((_, v)) = best_split(&p, start, end, cfg)? {
            if v > 0.0 {
                // The first positive window usually sees the change only
                // near its right edge, where candidates are cut off; look
                // one more minimum window ahead before placing it.
                let ahead = (end + cfg.min_window).min(b);
                let (c, _) = best_split(&p, start, ahead, cfg)?.expect("window only grew");
                out.push(c);
                start = c;
                end = (start + needed).min(b);
                if b - start < needed {
                    break;
                }
                continue;
            }
        }
        if end == b {
            break;
        }
        if end - start < cfg.max_window {
            end = (end + cfg.grow).min(b);
        } else {
            start += cfg.grow;
            end = (end + cfg.grow).min(b);
        }
    }
    refine(&p, a, b, out, cfg)
}

/// Second pass: each change is re-located between its neighbours and
/// dropped when that span no longer favours a split. A change the scan
/// placed early can hide a true one less than a minimum window later.
fn refine(p: &Prefix, a: usize, b: usize, mut out: Vec<usize>, cfg: &DiarizeConfig) -> Result<Vec<usize>, DiarizeError> {
    for _ in 0..REFINE_PASSES {
        let mut moved = false;
        let mut i = 0;
        while i < out.len() {
            let lo = if i == 0 { a } else { out[i - 1] };
            let hi = out.get(i + 1).copied().unwrap_or(b);
            match best_split(p, lo, hi, cfg)? {
                Some((c, v)) if v > 0.0 => {
                    moved |= c != out[i];
                    out[i] = c;
                    i += 1;
                }
                _ => {
                    out.remove(i);
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    Ok(out)
}

const REFINE_PASSES: usize = 10;

/// Change times over the whole matrix.
pub fn detect_changes(f: &FeatureMatrix, duration: f64, cfg: &DiarizeConfig) -> Result<Vec<f64>, DiarizeError> {
    Ok(detect_changes_in(f, 0, f.rows(), cfg)?
        .into_iter()
        .map(|c| boundary_time(c, f.rows(), f.hop, f.win, duration))
        .collect())
}

/// Agglomerative clustering: merge the pair with the most negative ΔBIC
/// until every pair favours separation. Returns a cluster index per
/// segment, numbered by first occurrence.
pub fn cluster_speakers(segments: &[GaussStats], lambda: f64) -> Result<Vec<usize>, DiarizeError> {
    let mut clusters: Vec<(GaussStats, Vec<usize>)> = segments.iter().cloned().enumerate().map(|(i, s)| (s, vec![i])).collect();
    while clusters.len() > 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let v = delta_bic(&clusters[i].0, &clusters[j].0, lambda)?;
                if best.map_or(true, |(_, _, bv)| v < bv) {
                    best = Some((i, j, v));
                }
            }
        }
        let (i, j, v) = best.expect("at least one pair");
        if v >= 0.0 {
            break;
        }
        let (sj, mj) = clusters.remove(j);
        clusters[i].0 = clusters[i].0.merge(&sj);
        clusters[i].1.extend(mj);
    }
    let mut raw = vec![0usize; segments.len()];
    for (k, (_, members)) in clusters.iter().enumerate() {
        for &m in members {
            raw[m] = k;
        }
    }
    // relabel by first occurrence
    let mut map: Vec<Option<usize>> = vec![None; clusters.len()];
    let mut next = 0;
    Ok(raw
        .into_iter()
        .map(|k| {
            *map[k].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSegment {
    pub start: f64,
    pub end: f64,
    pub speaker: String,
}

/// Diarizes the speech frame ranges `speech` of `f`. Ranges long enough
/// for change detection are split first; nonspeech gets no label.
pub fn diarize(f: &FeatureMatrix, speech: &[(usize, usize)], duration: f64, cfg: &DiarizeConfig) -> Result<Vec<SpeakerSegment>, DiarizeError> {
    let p = Prefix::new(f, cfg.dims);
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in speech {
        if b <= a {
            continue;
        }
        let mut s = a;
        if b - a >= 2 * cfg.min_window {
            for c in detect_changes_in(f, a, b, cfg)? {
                pieces.push((s, c));
                s = c;
            }
        }
        pieces.push((s, b));
    }
    if pieces.is_empty() {
        return Ok(Vec::new());
    }
    let stats: Vec<GaussStats> = pieces.iter().map(|&(a, b)| p.stats(a, b)).collect();
    let labels = cluster_speakers(&stats, cfg.lambda)?;
    Ok(pieces
        .iter()
        .zip(labels)
        .map(|(&(a, b), l)| SpeakerSegment {
            start: boundary_time(a, f.rows(), f.hop, f.win, duration),
            end: boundary_time(b, f.rows(), f.hop, f.win, duration),
            speaker: format!("S{l}"),
        })
        .collect())
}
