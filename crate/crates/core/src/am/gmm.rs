use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// `ln(Σ exp(x))`, ignoring `-inf` terms.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GmmParams", into = "GmmParams")]
pub struct Gmm {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
    /// ln w_k − ½ Σ_d ln(2π σ²_kd), cached.
    gconst: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GmmParams {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

impl From<GmmParams> for Gmm {
    fn from(p: GmmParams) -> Self {
        Gmm::new(p.weights, p.means, p.vars)
    }
}

impl From<Gmm> for GmmParams {
    fn from(g: Gmm) -> Self {
        GmmParams {
            weights: g.weights,
            means: g.means,
            vars: g.vars,
        }
    }
}

impl Gmm {
    /// Panics on inconsistent shapes; values are taken as given.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>) -> Gmm {
        assert!(!weights.is_empty(), "a mixture needs at least one component");
        assert_eq!(weights.len(), means.len());
        assert_eq!(weights.len(), vars.len());
        let d = means[0].len();
        assert!(means.iter().chain(&vars).all(|v| v.len() == d), "ragged mixture");
        let mut g = Gmm {
            weights,
            means,
            vars,
            gconst: Vec::new(),
        };
        g.refresh();
        g
    }

    pub fn single(mean: Vec<f64>, var: Vec<f64>) -> Gmm {
        Gmm::new(vec![1.0], vec![mean], vec![var])
    }

    fn refresh(&mut self) {
        self.gconst = self
            .weights
            .iter()
            .zip(&self.vars)
            .map(|(w, v)| w.ln() - 0.5 * v.iter().map(|s| (2.0 * PI * s).ln()).sum::<f64>())
            .collect();
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn vars(&self) -> &[Vec<f64>] {
        &self.vars
    }

    /// Log density of component `k` including its log weight.
    pub fn component_loglik(&self, k: usize, x: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((xi, m), v) in x.iter().zip(&self.means[k]).zip(&self.vars[k]) {
            let d = xi - m;
            q += d * d / v;
        }
        self.gconst[k] - 0.5 * q
    }

    pub fn loglik(&self, x: &[f64]) -> f64 {
        if self.weights.len() == 1 {
            return self.component_loglik(0, x);
        }
        let parts: Vec<f64> = (0..self.weights.len()).map(|k| self.component_loglik(k, x)).collect();
        logsumexp(&parts)
    }

    /// Splits the heaviest component (first on ties) into two with means
    /// μ ± 0.1σ and half the weight each, until there are `k` components.
    pub fn split_to(&mut self, k: usize) {
        while self.weights.len() < k {
            let mut h = 0;
            for i in 1..self.weights.len() {
                if self.weights[i] > self.weights[h] {
                    h = i;
                }
            }
            let sd: Vec<f64> = self.vars[h].iter().map(|v| v.sqrt()).collect();
            let plus: Vec<f64> = self.means[h].iter().zip(&sd).map(|(m, s)| m + 0.1 * s).collect();
            let minus: Vec<f64> = self.means[h].iter().zip(&sd).map(|(m, s)| m - 0.1 * s).collect();
            self.weights[h] /= 2.0;
            self.means[h] = plus;
            self.weights.push(self.weights[h]);
            self.means.push(minus);
            self.vars.push(self.vars[h].clone());
        }
        self.refresh();
    }

    /// One EM update from frames assigned to this mixture. Components with
    /// no responsibility keep their mean and variance.
    pub fn reestimate(&mut self, frames: &[&[f64]], var_floor: f64) {
        if frames.is_empty() {
            return;
        }
        let k = self.weights.len();
        let d = self.dim();
        let mut occ = vec![0.0; k];
        let mut sum = vec![vec![0.0; d]; k];
        let mut sq = vec![vec![0.0; d]; k];
        let mut posts = vec![1.0; frames.len() * k];
        if k > 1 {
            for (x, post) in frames.iter().zip(posts.chunks_exact_mut(k)) {
                for (j, p) in post.iter_mut().enumerate() {
                    *p = self.component_loglik(j, x);
                }
                let z = logsumexp(post);
                for p in post.iter_mut() {
                    *p = (*p - z).exp();
                }
            }
        }
        for (x, post) in frames.iter().zip(posts.chunks_exact(k)) {
            for j in 0..k {
                let g = post[j];
                if g == 0.0 {
                    continue;
                }
                occ[j] += g;
                for i in 0..d {
                    sum[j][i] += g * x[i];
                }
            }
        }
        for j in 0..k {
            if occ[j] > 0.0 {
                for i in 0..d {
                    sum[j][i] /= occ[j];
                }
            }
        }
        // centered second pass for a numerically stable variance
        for (x, post) in frames.iter().zip(posts.chunks_exact(k)) {
            for j in 0..k {
                let g = post[j];
                if g == 0.0 {
                    continue;
                }
                for i in 0..d {
                    let e = x[i] - sum[j][i];
                    sq[j][i] += g * e * e;
                }
            }
        }
        let total: f64 = occ.iter().sum();
        for j in 0..k {
            self.weights[j] = occ[j] / total;
            if occ[j] > 0.0 {
                self.means[j] = sum[j].clone();
                self.vars[j] = sq[j].iter().map(|s| (s / occ[j]).max(var_floor)).collect();
            }
        }
        self.refresh();
    }
}
