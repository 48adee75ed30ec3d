//! Left-to-right state graphs and exact Viterbi decoding.
//!
//! Nodes are emitting states stored in topological order: every arc goes
//! from a lower to a strictly higher index, and the only cycles are
//! self-loops. Scores are natural-log probabilities.

/// One emitting state.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    /// Column in the emission table.
    pub emission: usize,
    pub self_loop: f64,
    /// Outgoing arcs `(target, log prob)`, target > this node.
    pub next: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateGraph {
    pub nodes: Vec<GraphNode>,
    /// Entry nodes with their log prob.
    pub initial: Vec<(usize, f64)>,
    /// Exit nodes with the log prob of leaving the graph.
    pub finals: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("arc {from} -> {to} is not forward")]
    BackwardArc { from: usize, to: usize },
    #[error("node index {0} out of range")]
    BadNode(usize),
    #[error("graph has no entry or no exit")]
    NoEnds,
}

impl StateGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.nodes.len();
        if self.initial.is_empty() || self.finals.is_empty() {
            return Err(GraphError::NoEnds);
        }
        for &(i, _) in self.initial.iter().chain(&self.finals) {
            if i >= n {
                return Err(GraphError::BadNode(i));
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            for &(j, _) in &node.next {
                if j >= n {
                    return Err(GraphError::BadNode(j));
                }
                if j <= i {
                    return Err(GraphError::BackwardArc { from: i, to: j });
                }
            }
        }
        Ok(())
    }

    /// Fewest frames any complete path needs (one per visited node), or
    /// `None` if no entry reaches an exit.
    pub fn min_frames(&self) -> Option<usize> {
        let n = self.nodes.len();
        let mut dist = vec![usize::MAX; n];
        for &(i, p) in &self.initial {
            if p > f64::NEG_INFINITY {
                dist[i] = 1;
            }
        }
        for i in 0..n {
            if dist[i] == usize::MAX {
                continue;
            }
            for &(j, p) in &self.nodes[i].next {
                if p > f64::NEG_INFINITY {
                    dist[j] = dist[j].min(dist[i] + 1);
                }
            }
        }
        self.finals
            .iter()
            .filter(|&&(_, p)| p > f64::NEG_INFINITY)
            .map(|&(i, _)| dist[i])
            .min()
            .filter(|&d| d != usize::MAX)
    }
}

/// T x E table of per-frame emission log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct Emissions {
    frames: usize,
    width: usize,
    data: Vec<f64>,
}

impl Emissions {
    pub fn new(frames: usize, width: usize, data: Vec<f64>) -> Emissions {
        assert_eq!(data.len(), frames * width);
        Emissions { frames, width, data }
    }

    pub fn from_fn(frames: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Emissions {
        let mut data = Vec::with_capacity(frames * width);
        for t in 0..frames {
            for e in 0..width {
                data.push(f(t, e));
            }
        }
        Emissions { frames, width, data }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, t: usize, e: usize) -> f64 {
        self.data[t * self.width + e]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub score: f64,
    /// Node occupied at each frame.
    pub nodes: Vec<usize>,
}

/// Best complete path through `g` for all frames of `em`. Candidates are
/// compared with strict `>` in the order self-loop, then predecessors by
/// ascending index, so the first maximum wins.
pub fn viterbi(g: &StateGraph, em: &Emissions) -> Option<ViterbiPath> {
    let n = g.nodes.len();
    let t_len = em.frames();
    if n == 0 || t_len == 0 {
        return None;
    }
    let mut preds: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, node) in g.nodes.iter().enumerate() {
        for &(j, p) in &node.next {
            preds[j].push((i, p));
        }
    }
    for p in &mut preds {
        p.sort_by_key(|&(i, _)| i);
    }

    let mut prev = vec![f64::NEG_INFINITY; n];
    for &(i, p) in &g.initial {
        let v = p + em.get(0, g.nodes[i].emission);
        if v > prev[i] {
            prev[i] = v;
        }
    }
    let mut back = vec![0u32; t_len * n];
    let mut cur = vec![f64::NEG_INFINITY; n];
    for t in 1..t_len {
        let row = em.row(t);
        for j in 0..n {
            let node = &g.nodes[j];
            let mut best = prev[j] + node.self_loop;
            let mut arg = j;
            for &(i, p) in &preds[j] {
                let cand = prev[i] + p;
                if cand > best {
                    best = cand;
                    arg = i;
                }
            }
            back[t * n + j] = arg as u32;
            cur[j] = if best == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                best + row[node.emission]
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut best = f64::NEG_INFINITY;
    let mut end = usize::MAX;
    for &(i, p) in &g.finals {
        let v = prev[i] + p;
        if v > best {
            best = v;
            end = i;
        }
    }
    if end == usize::MAX || !best.is_finite() {
        return None;
    }
    let mut nodes = vec![0usize; t_len];
    let mut j = end;
    for t in (0..t_len).rev() {
        nodes[t] = j;
        if t > 0 {
            j = back[t * n + j] as usize;
        }
    }
    Some(ViterbiPath { score: best, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over every state path, for small graphs only. Adds
    /// scores in the same order as [`viterbi`], so results compare exactly.
    fn brute_force(g: &StateGraph, em: &Emissions) -> Option<ViterbiPath> {
        fn walk(g: &StateGraph, em: &Emissions, path: &mut Vec<usize>, score: f64, best: &mut Option<ViterbiPath>) {
            let t = path.len();
            let here = *path.last().unwrap();
            if t == em.frames() {
                for &(i, p) in &g.finals {
                    if i == here {
                        let s = score + p;
                        if s.is_finite() && best.as_ref().map_or(true, |b| s > b.score) {
                            *best = Some(ViterbiPath { score: s, nodes: path.clone() });
                        }
                    }
                }
                return;
            }
            let node = &g.nodes[here];
            let moves = std::iter::once((here, node.self_loop)).chain(node.next.iter().copied());
            for (j, p) in moves {
                let s = score + p;
                if s == f64::NEG_INFINITY {
                    continue;
                }
                path.push(j);
                walk(g, em, path, s + em.get(t, g.nodes[j].emission), best);
                path.pop();
            }
        }

        let mut best = None;
        if em.frames() == 0 {
            return None;
        }
        for &(i, p) in &g.initial {
            let s = p + em.get(0, g.nodes[i].emission);
            if s == f64::NEG_INFINITY {
                continue;
            }
            let mut path = vec![i];
            walk(g, em, &mut path, s, &mut best);
        }
        best
    }

    /// Random graph plus emission table for oracle checks.
    fn random_instance<R: rand::Rng>(rng: &mut R, max_states: usize, max_frames: usize) -> (StateGraph, Emissions) {
        let n = rng.gen_range(1..=max_states);
        let t = rng.gen_range(1..=max_frames);
        let width = rng.gen_range(1..=n);
        let lp = |rng: &mut R| -> f64 { (rng.gen::<f64>() * 0.98 + 0.01).ln() };
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let mut next = Vec::new();
            for j in i + 1..n {
                if j == i + 1 || rng.gen_bool(0.25) {
                    next.push((j, lp(rng)));
                }
            }
            nodes.push(GraphNode {
                emission: rng.gen_range(0..width),
                self_loop: lp(rng),
                next,
            });
        }
        let mut initial = vec![(0, 0.0)];
        let mut finals = vec![(n - 1, lp(rng))];
        for i in 1..n {
            if rng.gen_bool(0.15) {
                initial.push((i, lp(rng)));
            }
        }
        for i in 0..n - 1 {
            if rng.gen_bool(0.15) {
                finals.push((i, lp(rng)));
            }
        }
        let data = (0..t * width).map(|_| rng.gen_range(-20.0..0.0)).collect();
        (StateGraph { nodes, initial, finals }, Emissions::new(t, width, data))
    }

    fn chain(n: usize, self_loop: f64, fwd: f64) -> StateGraph {
        StateGraph {
            nodes: (0..n)
                .map(|i| GraphNode {
                    emission: i,
                    self_loop,
                    next: if i + 1 < n { vec![(i + 1, fwd)] } else { vec![] },
                })
                .collect(),
            initial: vec![(0, 0.0)],
            finals: vec![(n - 1, 0.0)],
        }
    }

    #[test]
    fn chain_uses_every_state() {
        let g = chain(3, 0.5f64.ln(), 0.5f64.ln());
        let em = Emissions::from_fn(6, 3, |t, e| if t / 2 == e { 0.0 } else { -10.0 });
        let p = viterbi(&g, &em).unwrap();
        assert_eq!(p.nodes, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(g.min_frames(), Some(3));
        assert!(viterbi(&g, &Emissions::from_fn(2, 3, |_, _| 0.0)).is_none());
    }

    #[test]
    fn validation() {
        let mut g = chain(3, 0.0, 0.0);
        assert!(g.validate().is_ok());
        g.nodes[2].next.push((1, 0.0));
        assert_eq!(g.validate(), Err(GraphError::BackwardArc { from: 2, to: 1 }));
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let (g, em) = random_instance(&mut rng, 12, 8);
            let a = viterbi(&g, &em);
            let b = brute_force(&g, &em);
            match (a, b) {
                (Some(a), Some(b)) => {
                    assert_eq!(a.score, b.score);
                    assert_eq!(a.nodes, b.nodes);
                }
                (None, None) => {}
                (a, b) => panic!("{a:?} vs {b:?}"),
            }
        }
    }
}
