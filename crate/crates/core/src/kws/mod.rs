//! Keyword spotting by likelihood ratio against a best-state background.
//!
//! For every start frame the keyword's state chain is Viterbi-decoded with a
//! free end. The raw score of a hit is the mean per-frame difference between
//! the keyword path's emission log-likelihood and the best emission of any
//! state at that frame, so it is never positive and a perfect match scores 0.
//! Reported likelihoods are `max(0, raw − LIKELIHOOD_FLOOR) · 100`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::boundary_time;
use crate::am::{AcousticModel, AmError, Unit, STATES};
use crate::dsp::FeatureMatrix;
use crate::g2p::{syllabify, G2p, G2pError, Lexicon, PhoneSeq, Syllable};

/// Raw score that maps to likelihood 0.
pub const LIKELIHOOD_FLOOR: f64 = -3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KwsError {
    #[error(transparent)]
    G2p(#[from] G2pError),
    #[error(transparent)]
    Model(#[from] AmError),
    #[error("keyword must be a single token, got {0:?}")]
    NotOneToken(String),
    #[error("threshold is NaN")]
    NanThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    Word,
    SyllableFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordQuery {
    pub keyword: String,
    pub pronunciations: Vec<PhoneSeq>,
    pub mode: QueryMode,
    /// Syllables of each pronunciation in syllable-fallback mode, empty in
    /// word mode.
    pub syllables: Vec<Vec<Syllable>>,
}

/// Lexicon words are searched with their lexicon pronunciations; anything
/// else is transcribed by rules and split into syllables.
pub fn build_query(keyword: &str, lexicon: &Lexicon, g2p: &G2p) -> Result<KeywordQuery, KwsError> {
    let word = keyword.trim().to_lowercase();
    if word.is_empty() {
        return Err(G2pError::EmptyWord.into());
    }
    if word.split_whitespace().count() > 1 {
        return Err(KwsError::NotOneToken(keyword.to_string()));
    }
    if let Some(prons) = lexicon.get(&word) {
        return Ok(KeywordQuery {
            keyword: word,
            pronunciations: prons.to_vec(),
            mode: QueryMode::Word,
            syllables: Vec::new(),
        });
    }
    let mut pronunciations = Vec::new();
    let mut syllables = Vec::new();
    for p in g2p.transcribe_by_rules(&word)? {
        let s = syllabify(&p)?;
        pronunciations.push(crate::g2p::syllable::join(&s));
        syllables.push(s);
    }
    Ok(KeywordQuery {
        keyword: word,
        pronunciations,
        mode: QueryMode::SyllableFallback,
        syllables,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordHit {
    pub keyword: String,
    pub start: f64,
    pub duration: f64,
    pub likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwsConfig {
    /// Minimum raw score (mean nats per frame relative to the background).
    pub threshold: f64,
    /// Longest hit, as a multiple of the pronunciation's expected frames.
    pub max_stretch: f64,
}

impl Default for KwsConfig {
    fn default() -> Self {
        KwsConfig {
            threshold: -1.0,
            max_stretch: 2.0,
        }
    }
}

pub fn likelihood(raw: f64) -> f64 {
    (raw - LIKELIHOOD_FLOOR).max(0.0) * 100.0
}

/// Best-ending span for one start frame, in frames `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    start: usize,
    end: usize,
    raw: f64,
}

struct Chain {
    ids: Vec<usize>,
    self_loop: Vec<f64>,
    forward: Vec<f64>,
    max_len: usize,
}

impl Chain {
    fn new(model: &AcousticModel, pron: &PhoneSeq, stretch: f64) -> Chain {
        let mut c = Chain {
            ids: Vec::new(),
            self_loop: Vec::new(),
            forward: Vec::new(),
            max_len: 0,
        };
        for &p in pron.iter() {
            let u = Unit::Phone(p);
            let h = model.hmm(u);
            for s in 0..STATES {
                c.ids.push(u.state_id(s));
                c.self_loop.push(h.self_loop[s].ln());
                c.forward.push(h.forward(s).ln());
            }
        }
        c.max_len = ((model.expected_frames_of(pron) * stretch).ceil() as usize).max(c.ids.len());
        c
    }

    /// Viterbi from `start` with every end frame allowed; the path is chosen
    /// on emissions plus transitions, the score is its mean emission deficit.
    fn best_from(&self, start: usize, em: &crate::align::graph::Emissions, bg: &[f64]) -> Option<Candidate> {
        let n = self.ids.len();
        let t_max = em.frames().min(start + self.max_len);
        if n == 0 || start + n > t_max {
            return None;
        }
        let mut score = vec![f64::NEG_INFINITY; n];
        let mut deficit = vec![0.0; n];
        score[0] = em.get(start, self.ids[0]);
        deficit[0] = score[0] - bg[start];
        let mut best: Option<Candidate> = None;
        for t in start + 1..t_max {
            let d = |j: usize| em.get(t, self.ids[j]) - bg[t];
            for j in (0..n).rev() {
                let stay = score[j] + self.self_loop[j];
                let enter = if j > 0 { score[j - 1] + self.forward[j - 1] } else { f64::NEG_INFINITY };
                let e = em.get(t, self.ids[j]);
                if enter > stay {
                    score[j] = enter + e;
                    deficit[j] = deficit[j - 1] + d(j);
                } else {
                    score[j] = stay + e;
                    deficit[j] += d(j);
                }
            }
            let len = t + 1 - start;
            if len >= n && score[n - 1] > f64::NEG_INFINITY {
                let raw = deficit[n - 1] / len as f64;
                if best.is_none_or(|b| raw > b.raw) {
                    best = Some(Candidate { start, end: t + 1, raw });
                }
            }
        }
        best
    }
}

/// Hits for one keyword, sorted by descending likelihood (earlier start
/// first on ties). Hits never overlap.
pub fn search(f: &FeatureMatrix, query: &KeywordQuery, model: &AcousticModel, cfg: &KwsConfig) -> Result<Vec<KeywordHit>, KwsError> {
    model.check_features(f)?;
    if cfg.threshold.is_nan() {
        return Err(KwsError::NanThreshold);
    }
    let em = model.all_emissions(f);
    let bg: Vec<f64> = (0..em.frames()).map(|t| em.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    Ok(search_with(f, query, model, cfg, &em, &bg))
}

fn search_with(
    f: &FeatureMatrix,
    query: &KeywordQuery,
    model: &AcousticModel,
    cfg: &KwsConfig,
    em: &crate::align::graph::Emissions,
    bg: &[f64],
) -> Vec<KeywordHit> {
    let chains: Vec<Chain> = query.pronunciations.iter().map(|p| Chain::new(model, p, cfg.max_stretch)).collect();
    let mut cands: Vec<Candidate> = (0..em.frames())
        .into_par_iter()
        .filter_map(|s| {
            chains
                .iter()
                .filter_map(|c| c.best_from(s, em, bg))
                .fold(None, |acc: Option<Candidate>, c| match acc {
                    Some(a) if a.raw >= c.raw => Some(a),
                    _ => Some(c),
                })
        })
        .filter(|c| c.raw >= cfg.threshold)
        .collect();
    cands.sort_by(|a, b| b.raw.total_cmp(&a.raw).then(a.start.cmp(&b.start)));
    let mut kept: Vec<Candidate> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| c.end <= k.start || c.start >= k.end) {
            kept.push(c);
        }
    }
    let duration = crate::align::frames_duration(f);
    let time = |k: usize| boundary_time(k, f.rows(), f.hop, f.win, duration);
    kept.iter()
        .map(|c| KeywordHit {
            keyword: query.keyword.clone(),
            start: time(c.start),
            duration: time(c.end) - time(c.start),
            likelihood: likelihood(c.raw),
        })
        .collect()
}

/// Searches several keywords concurrently over one emission table.
pub fn search_all(f: &FeatureMatrix, queries: &[KeywordQuery], model: &AcousticModel, cfg: &KwsConfig) -> Result<Vec<KeywordHit>, KwsError> {
    model.check_features(f)?;
    if cfg.threshold.is_nan() {
        return Err(KwsError::NanThreshold);
    }
    let em = model.all_emissions(f);
    let bg: Vec<f64> = (0..em.frames()).map(|t| em.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let per: Vec<Vec<KeywordHit>> = queries.par_iter().map(|q| search_with(f, q, model, cfg, &em, &bg)).collect();
    Ok(per.into_iter().flatten().collect())
}

/// Rounds to two decimals and drops trailing zeros: 0.30 → "0.3", 0 → "0".
pub fn format_number(x: f64) -> String {
    let s = format!("{:.2}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// One `keyword start duration likelihood` line per hit. Keywords appear in
/// order of first occurrence, hits within a keyword by descending
/// likelihood (stable for ties).
pub fn format_hits(hits: &[KeywordHit]) -> String {
    let mut order: Vec<&str> = Vec::new();
    for h in hits {
        if !order.contains(&h.keyword.as_str()) {
            order.push(&h.keyword);
        }
    }
    let mut out = String::new();
    for k in order {
        let mut group: Vec<&KeywordHit> = hits.iter().filter(|h| h.keyword == k).collect();
        group.sort_by(|a, b| b.likelihood.total_cmp(&a.likelihood));
        for h in group {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                h.keyword,
                format_number(h.start),
                format_number(h.duration),
                format_number(h.likelihood)
            );
        }
    }
    out
}
