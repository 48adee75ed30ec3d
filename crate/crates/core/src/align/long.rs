//! Long recordings: split at pauses, align chunks with overlapping text,
//! keep confident words that neighbouring chunks agree on as anchors and
//! recurse into the spans between them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::force::{force_align_frames, AlignGraph, AlignOptions, WordPron};
use super::{AlignError, Alignment, FrameAlignment, FrameSpan};
use crate::am::{AcousticModel, Unit, STATES};
use crate::dsp::{AudioBuffer, FeatureMatrix, Frontend};
use crate::g2p::G2p;
use crate::vad::{energy_model, vad_segment, SegmentKind, Smoothing, VadModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongOptions {
    /// Spans longer than this are chunked.
    pub chunk_seconds: f64,
    /// Words added on each side of a chunk's provisional text.
    pub margin_words: usize,
    /// Anchors score at least the median word score minus this.
    pub anchor_drop: f64,
    /// Neighbouring chunks must place an anchor within this many frames.
    pub agreement_frames: usize,
    pub max_depth: usize,
    /// Largest frames × states product aligned in one piece.
    pub max_trellis: usize,
    pub smoothing: Smoothing,
    pub align: AlignOptions,
}

impl Default for LongOptions {
    fn default() -> Self {
        LongOptions {
            chunk_seconds: 60.0,
            margin_words: 5,
            anchor_drop: 1.0,
            agreement_frames: 2,
            max_depth: 5,
            max_trellis: 400_000_000,
            smoothing: Smoothing::default(),
            align: AlignOptions::default(),
        }
    }
}

struct Ctx<'a> {
    f: &'a FeatureMatrix,
    words: &'a [WordPron],
    model: &'a AcousticModel,
    /// Speech frame ranges from the VAD.
    speech: Vec<(usize, usize)>,
    expected: Vec<f64>,
    min_frames: Vec<usize>,
    opts: &'a LongOptions,
    chunk_frames: usize,
}

/// Result of one span: per-word pieces in text order.
struct Solved {
    alignment: FrameAlignment,
    low_confidence: bool,
}

impl Ctx<'_> {
    fn min_frames(&self, w0: usize, w1: usize) -> usize {
        self.min_frames[w0..w1].iter().sum()
    }

    fn direct(&self, f0: usize, f1: usize, w0: usize, w1: usize) -> Result<FrameAlignment, AlignError> {
        let sub = self.f.slice(f0, f1);
        force_align_frames(&sub, &self.words[w0..w1], self.model, &self.opts.align).map(|a| a.shifted(f0))
    }

    fn trellis(&self, f0: usize, f1: usize, w0: usize, w1: usize) -> usize {
        let nodes = AlignGraph::build(self.model, &self.words[w0..w1], &self.opts.align).graph.len();
        (f1 - f0).saturating_mul(nodes)
    }

    /// Exact alignment when affordable, otherwise proportional spacing.
    fn finish(&self, f0: usize, f1: usize, w0: usize, w1: usize, low: bool) -> Result<Solved, AlignError> {
        if self.trellis(f0, f1, w0, w1) <= self.opts.max_trellis {
            Ok(Solved {
                alignment: self.direct(f0, f1, w0, w1)?,
                low_confidence: low,
            })
        } else {
            Ok(Solved {
                alignment: self.proportional(f0, f1, w0, w1),
                low_confidence: true,
            })
        }
    }

    /// Spreads frames over the phones of the first pronunciations in
    /// proportion to their expected durations, at least one state each.
    fn proportional(&self, f0: usize, f1: usize, w0: usize, w1: usize) -> FrameAlignment {
        let mut phones: Vec<(usize, Unit, f64)> = Vec::new();
        for w in w0..w1 {
            let pron = self.words[w].prons.iter().min_by_key(|p| p.len()).expect("non-empty");
            for &p in pron {
                let u = Unit::Phone(p);
                phones.push((w - w0, u, self.model.expected_frames(u)));
            }
        }
        let total: f64 = phones.iter().map(|p| p.2).sum();
        let spare = (f1 - f0).saturating_sub(phones.len() * STATES) as f64;
        let mut out = FrameAlignment::default();
        let mut acc = 0.0;
        let mut start = f0;
        for (i, &(w, u, e)) in phones.iter().enumerate() {
            acc += e;
            let end = if i + 1 == phones.len() {
                f1
            } else {
                f0 + (i + 1) * STATES + (spare * acc / total).floor() as usize
            };
            let score = (start..end)
                .map(|t| self.model.frame_loglik(u, 1, self.f.row(t)).unwrap_or(f64::NEG_INFINITY))
                .sum::<f64>()
                / (end - start) as f64;
            out.phones.push(FrameSpan {
                label: u.to_string(),
                start,
                end,
                score,
            });
            out.word_of_phone.push(w);
            start = end;
        }
        for w in 0..w1 - w0 {
            let ps: Vec<&FrameSpan> = out.phones.iter().zip(&out.word_of_phone).filter(|(_, &x)| x == w).map(|(p, _)| p).collect();
            let n: usize = ps.iter().map(|p| p.end - p.start).sum();
            out.words.push(FrameSpan {
                label: self.words[w0 + w].word.clone(),
                start: ps[0].start,
                end: ps[ps.len() - 1].end,
                score: ps.iter().map(|p| p.score * (p.end - p.start) as f64).sum::<f64>() / n as f64,
            });
        }
        out
    }

    /// Splits `[f0, f1)` into pieces of at most `chunk_frames`, cutting in
    /// the middle of pauses where possible. Returns `(start, end, speech
    /// frames)` per chunk.
    fn chunks(&self, f0: usize, f1: usize) -> Vec<(usize, usize, usize)> {
        let speech: Vec<(usize, usize)> = self.speech.iter().map(|&(a, b)| (a.max(f0), b.min(f1))).filter(|(a, b)| a < b).collect();
        let mut cuts = vec![f0];
        let mut start = f0;
        for (i, &(_, b)) in speech.iter().enumerate() {
            let next_end = speech.get(i + 1).map(|s| s.1).unwrap_or(f1);
            if next_end - start > self.chunk_frames && i + 1 < speech.len() {
                let cut = (b + speech[i + 1].0) / 2;
                if cut > start {
                    cuts.push(cut);
                    start = cut;
                }
            }
        }
        cuts.push(f1);
        // hard cuts inside over-long pieces
        let mut bounds = vec![f0];
        for w in cuts.windows(2) {
            let mut s = w[0];
            while w[1] - s > self.chunk_frames {
                s += self.chunk_frames;
                bounds.push(s);
            }
            bounds.push(w[1]);
        }
        bounds.dedup();
        bounds
            .windows(2)
            .map(|w| {
                let sp: usize = speech.iter().map(|&(a, b)| b.min(w[1]).saturating_sub(a.max(w[0]))).sum();
                (w[0], w[1], sp)
            })
            .collect()
    }

    fn solve(&self, f0: usize, f1: usize, w0: usize, w1: usize, depth: usize) -> Result<Solved, AlignError> {
        if w0 == w1 {
            return Ok(Solved {
                alignment: FrameAlignment::default(),
                low_confidence: false,
            });
        }
        let required = self.min_frames(w0, w1);
        if required > f1 - f0 {
            return Err(AlignError::GraphTooLong { required, available: f1 - f0 });
        }
        if f1 - f0 <= self.chunk_frames {
            return self.finish(f0, f1, w0, w1, false);
        }
        // exact alignment of an over-long span is still exact
        if depth >= self.opts.max_depth {
            return self.finish(f0, f1, w0, w1, false);
        }
        let chunks = self.chunks(f0, f1);
        if chunks.len() < 2 {
            return self.finish(f0, f1, w0, w1, false);
        }

        // provisional text per chunk, by expected duration
        let total_speech: f64 = chunks.iter().map(|c| c.2.max(1) as f64).sum();
        let total_expected: f64 = self.expected[w0..w1].iter().sum();
        let mut chunk_of = Vec::with_capacity(w1 - w0);
        let mut acc = 0.0;
        for w in w0..w1 {
            let mid = (acc + self.expected[w] / 2.0) / total_expected;
            acc += self.expected[w];
            let mut c = 0;
            let mut s = 0.0;
            for (k, ch) in chunks.iter().enumerate() {
                s += ch.2.max(1) as f64 / total_speech;
                c = k;
                if mid < s {
                    break;
                }
            }
            chunk_of.push(c);
        }
        let core: Vec<(usize, usize)> = (0..chunks.len())
            .map(|c| {
                let a = chunk_of.iter().position(|&x| x >= c).map_or(w1, |i| w0 + i);
                let b = chunk_of.iter().position(|&x| x > c).map_or(w1, |i| w0 + i);
                (a, b)
            })
            .collect();
        let m = self.opts.margin_words;
        let ranges: Vec<(usize, usize)> = core
            .iter()
            .map(|&(a, b)| if a == b { (a, a) } else { (a.saturating_sub(m).max(w0), (b + m).min(w1)) })
            .collect();
        let aligned: Vec<Option<FrameAlignment>> = chunks
            .par_iter()
            .zip(ranges.par_iter())
            .map(|(&(c0, c1, _), &(a, b))| {
                if a == b || self.trellis(c0, c1, a, b) > self.opts.max_trellis {
                    return None;
                }
                self.direct(c0, c1, a, b).ok()
            })
            .collect();

        let mut scores: Vec<f64> = aligned.iter().flatten().flat_map(|a| a.words.iter().map(|w| w.score)).collect();
        if scores.is_empty() {
            return self.finish(f0, f1, w0, w1, true);
        }
        scores.sort_by(f64::total_cmp);
        let median = if scores.len() % 2 == 1 {
            scores[scores.len() / 2]
        } else {
            (scores[scores.len() / 2 - 1] + scores[scores.len() / 2]) / 2.0
        };
        let threshold = median - self.opts.anchor_drop;

        let placed = |c: usize, w: usize| -> Option<&FrameSpan> {
            let a = aligned.get(c)?.as_ref()?;
            let (lo, hi) = ranges[c];
            (lo..hi).contains(&w).then(|| &a.words[w - lo])
        };
        let agree =
            |x: &FrameSpan, y: &FrameSpan| x.start.abs_diff(y.start) <= self.opts.agreement_frames && x.end.abs_diff(y.end) <= self.opts.agreement_frames;
        // (word, chunk) of accepted anchors, in text order
        let mut anchors: Vec<(usize, usize)> = Vec::new();
        for (c, &(a, b)) in core.iter().enumerate() {
            for w in a..b {
                let Some(span) = placed(c, w) else { continue };
                if span.score < threshold {
                    continue;
                }
                let neighbours_agree = [c.checked_sub(1), Some(c + 1)]
                    .into_iter()
                    .flatten()
                    .filter_map(|n| placed(n, w))
                    .all(|other| agree(span, other));
                if !neighbours_agree {
                    continue;
                }
                // keep only anchors that leave room for the words around them
                let (prev_end, prev_word) = match anchors.last() {
                    Some(&(pw, pc)) => (placed(pc, pw).unwrap().end, pw + 1),
                    None => (f0, w0),
                };
                if span.start >= prev_end && span.start - prev_end >= self.min_frames(prev_word, w) {
                    anchors.push((w, c));
                }
            }
        }
        while let Some(&(w, c)) = anchors.last() {
            if f1 - placed(c, w).unwrap().end >= self.min_frames(w + 1, w1) {
                break;
            }
            anchors.pop();
        }
        if anchors.is_empty() {
            tracing::debug!(depth, f0, f1, "no anchors");
            return self.finish(f0, f1, w0, w1, true);
        }

        // spans between anchors, each solved one level deeper
        let mut jobs: Vec<(usize, usize, usize, usize)> = Vec::new();
        let (mut pf, mut pw) = (f0, w0);
        for &(w, c) in &anchors {
            let s = placed(c, w).unwrap();
            jobs.push((pf, s.start, pw, w));
            pf = s.end;
            pw = w + 1;
        }
        jobs.push((pf, f1, pw, w1));
        let solved: Vec<Result<Solved, AlignError>> = jobs.par_iter().map(|&(a, b, x, y)| self.solve(a, b, x, y, depth + 1)).collect();

        let mut out = FrameAlignment::default();
        let mut low = false;
        for (i, s) in solved.into_iter().enumerate() {
            let s = s?;
            low |= s.low_confidence;
            out.append(s.alignment);
            if let Some(&(w, c)) = anchors.get(i) {
                let a = aligned[c].as_ref().unwrap();
                let lo = ranges[c].0;
                out.append(a.take_words(w - lo, w - lo + 1));
            }
        }
        Ok(Solved {
            alignment: out,
            low_confidence: low,
        })
    }
}

/// Speech frame ranges of `audio`, from `vad` or from a plain energy gate.
pub fn speech_frames(audio: &AudioBuffer, frontend: &Frontend, vad: Option<&VadModel>, smoothing: &Smoothing) -> Result<Vec<(usize, usize)>, AlignError> {
    let vf = frontend.vad_features(audio)?;
    let fallback;
    let model = match vad {
        Some(m) => m,
        None => {
            fallback = energy_model(vf.fingerprint.clone(), 8.0);
            &fallback
        }
    };
    let segs = vad_segment(&vf, model, audio.duration(), smoothing)?;
    Ok(segs
        .segments
        .iter()
        .filter(|s| s.kind == SegmentKind::Speech)
        .map(|s| (s.first_frame, s.last_frame))
        .collect())
}

/// Alignment of a full transcription to a recording of any length.
/// Recordings up to `chunk_seconds` are aligned in one piece.
pub fn align_long<S: AsRef<str>>(
    audio: &AudioBuffer,
    words: &[S],
    model: &AcousticModel,
    g2p: &G2p,
    frontend: &Frontend,
    vad: Option<&VadModel>,
    opts: &LongOptions,
) -> Result<Alignment, AlignError> {
    let duration = audio.duration();
    if words.is_empty() {
        return Ok(Alignment {
            duration,
            ..Alignment::default()
        });
    }
    let f = frontend.mfcc(audio)?;
    model.check_features(&f)?;
    let prons = WordPron::lookup_all(g2p, words)?;
    let chunk_frames = ((opts.chunk_seconds / f.hop).round() as usize).max(1);
    let speech = if f.rows() > chunk_frames {
        speech_frames(audio, frontend, vad, &opts.smoothing)?
    } else {
        Vec::new()
    };
    let ctx = Ctx {
        f: &f,
        expected: prons.iter().map(|w| model.expected_frames_of(&w.prons[0]).max(1.0)).collect(),
        min_frames: prons.iter().map(|w| w.min_frames()).collect(),
        words: &prons,
        model,
        speech,
        opts,
        chunk_frames,
    };
    let solved = ctx.solve(0, f.rows(), 0, prons.len(), 0)?;
    let mut a = solved.alignment.to_seconds(&f, duration);
    a.low_confidence = solved.low_confidence;
    Ok(a)
}
