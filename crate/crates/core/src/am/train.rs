//! Flat start, Viterbi (hard-EM) re-estimation and mixture growth.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AcousticModel, AmError, Gmm, PhoneHmm, Unit, MAX_TRANSITION, MIN_TRANSITION, STATES};
use crate::align::graph::{viterbi, GraphNode, StateGraph, ViterbiPath};
use crate::dsp::FeatureMatrix;
use crate::g2p::PhoneSeq;

/// Features paired with the unit sequence they realize.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub features: FeatureMatrix,
    pub units: Vec<Unit>,
}

/// `sil`, the phones, `sil`.
pub fn utterance_units(phones: &PhoneSeq) -> Vec<Unit> {
    let mut u = vec![Unit::Sil];
    u.extend(phones.iter().map(|&p| Unit::Phone(p)));
    u.push(Unit::Sil);
    u
}

fn clamp_transition(p: f64) -> f64 {
    p.clamp(MIN_TRANSITION, MAX_TRANSITION)
}

fn gaussian(frames: &[&[f64]], dim: usize, floor: f64) -> Gmm {
    let mut g = Gmm::single(vec![0.0; dim], vec![1.0; dim]);
    g.reestimate(frames, floor);
    g
}

/// Straight chain over the states of `units`. Node `i` scores the state
/// whose id is `ids[i]`; its emission column is `i` as well.
pub fn linear_graph(model: &AcousticModel, units: &[Unit]) -> (StateGraph, Vec<usize>) {
    let mut nodes = Vec::with_capacity(units.len() * STATES);
    let mut ids = Vec::with_capacity(units.len() * STATES);
    for &u in units {
        let h = model.hmm(u);
        for s in 0..STATES {
            let i = nodes.len();
            nodes.push(GraphNode {
                emission: i,
                self_loop: h.self_loop[s].ln(),
                next: vec![(i + 1, h.forward(s).ln())],
            });
            ids.push(u.state_id(s));
        }
    }
    let finals = match nodes.last_mut() {
        Some(last) => {
            let exit = last.next[0].1;
            last.next.clear();
            vec![(nodes.len() - 1, exit)]
        }
        None => Vec::new(),
    };
    (
        StateGraph {
            nodes,
            initial: vec![(0, 0.0)],
            finals,
        },
        ids,
    )
}

/// Uniform segmentation: state `j` of `S` gets frames
/// `floor(j·T/S) .. floor((j+1)·T/S)`.
pub fn flat_start(corpus: &[Utterance], var_floor: f64) -> Result<AcousticModel, AmError> {
    let first = corpus.first().ok_or(AmError::EmptyCorpus)?;
    let dim = first.features.cols();
    let fingerprint = first.features.fingerprint.clone();
    let n_states = Unit::count() * STATES;
    let mut assigned: Vec<Vec<&[f64]>> = vec![Vec::new(); n_states];
    let mut stay = vec![0usize; n_states];
    let mut leave = vec![0usize; n_states];
    let mut all: Vec<&[f64]> = Vec::new();

    for (idx, utt) in corpus.iter().enumerate() {
        if utt.features.cols() != dim {
            return Err(AmError::DimensionMismatch {
                expected: dim,
                got: utt.features.cols(),
            });
        }
        let t = utt.features.rows();
        let s = utt.units.len() * STATES;
        if t < s || s == 0 {
            return Err(AmError::UtteranceTooShort {
                index: idx,
                frames: t,
                states: s,
            });
        }
        for j in 0..s {
            let id = utt.units[j / STATES].state_id(j % STATES);
            let (a, b) = (j * t / s, (j + 1) * t / s);
            for f in a..b {
                assigned[id].push(utt.features.row(f));
            }
            stay[id] += b - a - 1;
            leave[id] += 1;
        }
        all.extend(utt.features.iter_rows());
    }

    let global = gaussian(&all, dim, var_floor);
    let mut hmms = BTreeMap::new();
    for u in Unit::all() {
        let mut states = Vec::with_capacity(STATES);
        let mut self_loop = Vec::with_capacity(STATES);
        for s in 0..STATES {
            let id = u.state_id(s);
            if assigned[id].is_empty() {
                states.push(global.clone());
                self_loop.push(0.5);
            } else {
                states.push(gaussian(&assigned[id], dim, var_floor));
                self_loop.push(clamp_transition(stay[id] as f64 / (stay[id] + leave[id]) as f64));
            }
        }
        hmms.insert(u, PhoneHmm { unit: u, states, self_loop });
    }
    AcousticModel::new(hmms, fingerprint, dim, var_floor)
}

/// Per-iteration diagnostics of [`viterbi_train`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Total aligned log-likelihood under the model entering each iteration.
    pub loglik: Vec<f64>,
    /// Frames in the aligned utterances.
    pub frames: usize,
    /// Utterances that could not be aligned and were left out.
    pub skipped: Vec<usize>,
}

impl TrainReport {
    pub fn per_frame(&self) -> Vec<f64> {
        self.loglik.iter().map(|l| l / self.frames.max(1) as f64).collect()
    }
}

fn align_utterance(model: &AcousticModel, utt: &Utterance) -> Option<(ViterbiPath, Vec<usize>)> {
    let (g, ids) = linear_graph(model, &utt.units);
    if utt.features.rows() < g.len() {
        return None;
    }
    let em = model.emissions(&utt.features, &ids);
    viterbi(&g, &em).map(|p| (p, ids))
}

/// `iters` rounds of forced alignment followed by re-estimation. Gaussian
/// parameters get one EM step over the frames each state received;
/// self-loop probabilities are re-estimated from the path counts.
pub fn viterbi_train(model: &AcousticModel, corpus: &[Utterance], iters: usize) -> Result<(AcousticModel, TrainReport), AmError> {
    if corpus.is_empty() {
        return Err(AmError::EmptyCorpus);
    }
    for utt in corpus {
        model.check_features(&utt.features)?;
    }
    let mut model = model.clone();
    let mut report = TrainReport::default();
    let n_states = Unit::count() * STATES;

    for _ in 0..iters.max(1) {
        let paths: Vec<Option<(ViterbiPath, Vec<usize>)>> = corpus.par_iter().map(|u| align_utterance(&model, u)).collect();

        let mut total = 0.0;
        let mut frames = 0;
        let mut skipped = Vec::new();
        let mut assigned: Vec<Vec<&[f64]>> = vec![Vec::new(); n_states];
        let mut stay = vec![0usize; n_states];
        let mut leave = vec![0usize; n_states];
        for (idx, (utt, p)) in corpus.iter().zip(&paths).enumerate() {
            let Some((path, ids)) = p else {
                skipped.push(idx);
                continue;
            };
            total += path.score;
            frames += path.nodes.len();
            for (t, &node) in path.nodes.iter().enumerate() {
                let id = ids[node];
                assigned[id].push(utt.features.row(t));
                match path.nodes.get(t + 1) {
                    Some(&next) if next == node => stay[id] += 1,
                    _ => leave[id] += 1,
                }
            }
        }
        if skipped.len() == corpus.len() {
            return Err(AmError::AlignmentFailure { skipped: skipped.len() });
        }
        report.loglik.push(total);
        report.frames = frames;
        report.skipped = skipped;

        let floor = model.var_floor;
        for u in Unit::all() {
            let h = model.hmm_mut(u);
            for s in 0..STATES {
                let id = u.state_id(s);
                if assigned[id].is_empty() {
                    continue;
                }
                h.states[s].reestimate(&assigned[id], floor);
                h.self_loop[s] = clamp_transition(stay[id] as f64 / (stay[id] + leave[id]) as f64);
            }
        }
    }
    Ok((model, report))
}

/// Grows every state mixture to `k` components; a no-op where a state
/// already has `k` or more.
pub fn mixup(model: &AcousticModel, k: usize) -> AcousticModel {
    let mut m = model.clone();
    for u in Unit::all() {
        for g in &mut m.hmm_mut(u).states {
            g.split_to(k);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Re-estimation rounds after the flat start.
    pub iters: usize,
    /// Mixture sizes to grow to, each followed by `iters` more rounds.
    pub mixtures: Vec<usize>,
    pub var_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iters: 8,
            mixtures: vec![2],
            var_floor: super::DEFAULT_VAR_FLOOR,
        }
    }
}

/// Flat start, re-estimation, then each mixture stage.
pub fn train(corpus: &[Utterance], cfg: &TrainConfig) -> Result<(AcousticModel, TrainReport), AmError> {
    let model = flat_start(corpus, cfg.var_floor)?;
    let (mut model, mut report) = viterbi_train(&model, corpus, cfg.iters)?;
    for &k in &cfg.mixtures {
        model = mixup(&model, k);
        let (m, r) = viterbi_train(&model, corpus, cfg.iters)?;
        model = m;
        report.loglik.extend(r.loglik);
        report.frames = r.frames;
        report.skipped = r.skipped;
    }
    Ok((model, report))
}
