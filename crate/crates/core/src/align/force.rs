use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::graph::{viterbi, Emissions, GraphNode, StateGraph};
use super::{AlignError, Alignment, FrameAlignment, FrameSpan};
use crate::am::{AcousticModel, Unit, STATES};
use crate::dsp::FeatureMatrix;
use crate::g2p::{G2p, PhoneSeq};

/// A word and its candidate pronunciations.
#[derive(Debug, Clone, PartialEq)]
pub struct WordPron {
    pub word: String,
    pub prons: Vec<PhoneSeq>,
}

impl WordPron {
    pub fn lookup(g2p: &G2p, word: &str) -> Result<WordPron, AlignError> {
        Ok(WordPron {
            word: word.to_string(),
            prons: g2p.transcribe_word(word)?,
        })
    }

    pub fn lookup_all<S: AsRef<str>>(g2p: &G2p, words: &[S]) -> Result<Vec<WordPron>, AlignError> {
        words.iter().map(|w| WordPron::lookup(g2p, w.as_ref())).collect()
    }

    /// Fewest frames any pronunciation needs.
    pub fn min_frames(&self) -> usize {
        self.prons.iter().map(|p| p.len() * STATES).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignOptions {
    /// Allow `sil` between words and at both ends.
    pub optional_sil: bool,
    /// Probability of taking an optional `sil`.
    pub sil_prob: f64,
    /// Audio duration; defaults to the span covered by the frames.
    pub duration: Option<f64>,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            optional_sil: true,
            sil_prob: 0.5,
            duration: None,
        }
    }
}

/// Seconds covered by the analysis windows of `f`.
pub fn frames_duration(f: &FeatureMatrix) -> f64 {
    if f.rows() == 0 {
        0.0
    } else {
        (f.rows() - 1) as f64 * f.hop + f.win
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct NodeInfo {
    /// `None` for silence.
    word: Option<usize>,
    pron: usize,
    phone: usize,
}

pub(crate) struct AlignGraph {
    pub graph: StateGraph,
    /// State id scored by each emission column.
    pub ids: Vec<usize>,
    info: Vec<NodeInfo>,
    units: Vec<Unit>,
}

struct Builder<'a> {
    model: &'a AcousticModel,
    nodes: Vec<GraphNode>,
    info: Vec<NodeInfo>,
    units: Vec<Unit>,
    ids: Vec<usize>,
    columns: HashMap<usize, usize>,
    initial: Vec<(usize, f64)>,
}

impl Builder<'_> {
    /// Appends the states of `units` as a chain; returns the first node,
    /// the last node and the log probability of leaving the last one.
    fn chain(&mut self, units: &[Unit], word: Option<usize>, pron: usize) -> (usize, usize, f64) {
        let first = self.nodes.len();
        let mut exit = 0.0;
        for (k, &u) in units.iter().enumerate() {
            let h = self.model.hmm(u);
            for s in 0..STATES {
                let id = u.state_id(s);
                let next_col = self.ids.len();
                let col = *self.columns.entry(id).or_insert(next_col);
                if col == next_col {
                    self.ids.push(id);
                }
                let i = self.nodes.len();
                if i > first {
                    let p = exit;
                    self.nodes[i - 1].next.push((i, p));
                }
                self.nodes.push(GraphNode {
                    emission: col,
                    self_loop: h.self_loop[s].ln(),
                    next: Vec::new(),
                });
                self.info.push(NodeInfo { word, pron, phone: k });
                self.units.push(u);
                exit = h.forward(s).ln();
            }
        }
        (first, self.nodes.len() - 1, exit)
    }

    fn connect(&mut self, sources: &[(Option<usize>, f64)], to: usize, extra: f64) {
        for &(src, p) in sources {
            match src {
                Some(i) => self.nodes[i].next.push((to, p + extra)),
                None => self.initial.push((to, p + extra)),
            }
        }
    }
}

impl AlignGraph {
    /// Word sequence with optional `sil` gaps and parallel pronunciations.
    pub fn build(model: &AcousticModel, words: &[WordPron], opts: &AlignOptions) -> AlignGraph {
        let mut b = Builder {
            model,
            nodes: Vec::new(),
            info: Vec::new(),
            units: Vec::new(),
            ids: Vec::new(),
            columns: HashMap::new(),
            initial: Vec::new(),
        };
        let (take, skip) = if opts.optional_sil {
            (opts.sil_prob.ln(), (1.0 - opts.sil_prob).ln())
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
        // open arcs waiting for the next element; `None` is the graph entry
        let mut sources: Vec<(Option<usize>, f64)> = vec![(None, 0.0)];
        for gap in 0..=words.len() {
            let mut next_sources: Vec<(Option<usize>, f64)> = sources.iter().map(|&(s, p)| (s, p + skip)).collect();
            if opts.optional_sil {
                let (first, last, exit) = b.chain(&[Unit::Sil], None, 0);
                b.connect(&sources, first, take);
                next_sources.push((Some(last), exit));
            }
            sources = next_sources;
            let Some(w) = words.get(gap) else { break };
            let enter = -(w.prons.len() as f64).ln();
            let mut exits = Vec::new();
            for (pi, pron) in w.prons.iter().enumerate() {
                let units: Vec<Unit> = pron.iter().map(|&p| Unit::Phone(p)).collect();
                let (first, last, exit) = b.chain(&units, Some(gap), pi);
                b.connect(&sources, first, enter);
                exits.push((Some(last), exit));
            }
            sources = exits;
        }
        let finals = sources
            .into_iter()
            .filter(|(_, p)| *p > f64::NEG_INFINITY)
            .map(|(s, p)| (s.expect("graph has at least one node"), p))
            .collect();
        AlignGraph {
            graph: StateGraph {
                nodes: b.nodes,
                initial: b.initial.into_iter().filter(|(_, p)| *p > f64::NEG_INFINITY).collect(),
                finals,
            },
            ids: b.ids,
            info: b.info,
            units: b.units,
        }
    }

    /// Phone and word spans of a node path.
    fn spans(&self, path: &[usize], em: &Emissions, words: &[WordPron]) -> FrameAlignment {
        let mut out = FrameAlignment::default();
        let mut t = 0;
        while t < path.len() {
            let key = self.info[path[t]];
            let mut end = t + 1;
            while end < path.len() && self.info[path[end]] == key {
                end += 1;
            }
            if let Some(w) = key.word {
                let sum: f64 = (t..end).map(|k| em.get(k, self.graph.nodes[path[k]].emission)).sum();
                out.phones.push(FrameSpan {
                    label: self.units[path[t]].to_string(),
                    start: t,
                    end,
                    score: sum / (end - t) as f64,
                });
                out.word_of_phone.push(w);
                match out.words.last_mut() {
                    Some(last) if out.word_of_phone.len() > 1 && out.word_of_phone[out.word_of_phone.len() - 2] == w => {
                        // running sum, divided once the word is complete
                        last.end = end;
                        last.score += sum;
                    }
                    _ => out.words.push(FrameSpan {
                        label: words[w].word.clone(),
                        start: t,
                        end,
                        score: sum,
                    }),
                }
            }
            t = end;
        }
        for w in &mut out.words {
            w.score /= (w.end - w.start) as f64;
        }
        out
    }
}

/// Alignment of `words` to every frame of `f`, in frame units.
pub(crate) fn force_align_frames(f: &FeatureMatrix, words: &[WordPron], model: &AcousticModel, opts: &AlignOptions) -> Result<FrameAlignment, AlignError> {
    model.check_features(f)?;
    if words.is_empty() {
        return Ok(FrameAlignment::default());
    }
    let g = AlignGraph::build(model, words, opts);
    let required = g.graph.min_frames().ok_or(AlignError::NoPath)?;
    if required > f.rows() {
        return Err(AlignError::GraphTooLong { required, available: f.rows() });
    }
    let em = model.emissions(f, &g.ids);
    let path = viterbi(&g.graph, &em).ok_or(AlignError::NoPath)?;
    Ok(g.spans(&path.nodes, &em, words))
}

/// Exact Viterbi alignment of a known word sequence.
pub fn force_align<S: AsRef<str>>(f: &FeatureMatrix, words: &[S], model: &AcousticModel, g2p: &G2p, opts: &AlignOptions) -> Result<Alignment, AlignError> {
    let prons = WordPron::lookup_all(g2p, words)?;
    let a = force_align_frames(f, &prons, model, opts)?;
    Ok(a.to_seconds(f, opts.duration.unwrap_or_else(|| frames_duration(f))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::graph::GraphError;

    fn seq(s: &str) -> PhoneSeq {
        s.parse().unwrap()
    }

    fn toy_model() -> AcousticModel {
        crate::am::tests_support::toy_model()
    }

    #[test]
    fn graph_shape() {
        let m = toy_model();
        let words = vec![
            WordPron {
                word: "ma".into(),
                prons: vec![seq("m a")],
            },
            WordPron {
                word: "sa".into(),
                prons: vec![seq("s a"), seq("z a")],
            },
        ];
        let g = AlignGraph::build(&m, &words, &AlignOptions::default());
        assert_eq!(g.graph.validate(), Ok(()));
        // three sil gaps, 2 + 2 + 2 phones
        assert_eq!(g.graph.len(), 3 * 3 + 6 * 3);
        assert_eq!(g.graph.min_frames(), Some(12));
        assert_eq!(g.graph.initial.len(), 2);
        assert_eq!(g.graph.finals.len(), 3);

        let strict = AlignGraph::build(
            &m,
            &words,
            &AlignOptions {
                optional_sil: false,
                ..AlignOptions::default()
            },
        );
        assert_eq!(strict.graph.len(), 18);
        assert_eq!(strict.graph.initial, vec![(0, 0.0)]);
        assert!(!matches!(strict.graph.validate(), Err(GraphError::BackwardArc { .. })));
    }

    #[test]
    fn too_few_frames() {
        let m = toy_model();
        let f = FeatureMatrix::new(vec![0.0; 5 * m.dim], 5, m.dim, 0.01, 0.025, m.fingerprint.clone());
        let words = [WordPron {
            word: "ma".into(),
            prons: vec![seq("m a")],
        }];
        assert_eq!(
            force_align_frames(&f, &words, &m, &AlignOptions::default()).unwrap_err(),
            AlignError::GraphTooLong { required: 6, available: 5 }
        );
    }

    #[test]
    fn one_phone_spans_everything() {
        let m = toy_model();
        let t = 40;
        let f = FeatureMatrix::new(vec![0.3; t * m.dim], t, m.dim, 0.01, 0.025, m.fingerprint.clone());
        let words = [WordPron {
            word: "a".into(),
            prons: vec![seq("a")],
        }];
        let opts = AlignOptions {
            optional_sil: false,
            ..AlignOptions::default()
        };
        let a = force_align_frames(&f, &words, &m, &opts).unwrap().to_seconds(&f, 0.42);
        assert_eq!((a.words[0].start, a.words[0].end), (0.0, 0.42));
        assert_eq!(a.phones.len(), 1);
        assert_eq!(a.validate(), Ok(()));
    }
}
