//! CART decision trees: weighted Gini classification trees and
//! squared-error regression trees.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: Some(5),
            min_samples_split: 2,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Class distribution for classifiers, a single value for regressors.
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl DecisionTree {
    fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Normalized class distribution at the leaf reached by `row`.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        self.leaf(row).to_vec()
    }

    pub fn predict_class(&self, row: &[f64]) -> usize {
        super::argmax(self.leaf(row))
    }

    /// Regression output.
    pub fn predict_value(&self, row: &[f64]) -> f64 {
        self.leaf(row)[0]
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Fits a weighted Gini classification tree. `rng` is only used for
    /// feature subsampling.
    pub fn fit_classifier<R: Rng>(
        x: &[Vec<f64>],
        y: &[usize],
        w: &[f64],
        n_classes: usize,
        params: &TreeParams,
        rng: &mut R,
    ) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut b = Builder {
            x,
            d,
            params,
            nodes: Vec::new(),
            target: Target::Class { y, w, n_classes },
        };
        let idx: Vec<usize> = (0..x.len()).filter(|&i| w[i] > 0.0).collect();
        b.grow(idx, 0, rng);
        Self {
            nodes: b.nodes,
            n_features: d,
        }
    }

    /// Fits a squared-error regression tree.
    pub fn fit_regressor<R: Rng>(x: &[Vec<f64>], target: &[f64], params: &TreeParams, rng: &mut R) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut b = Builder {
            x,
            d,
            params,
            nodes: Vec::new(),
            target: Target::Value(target),
        };
        b.grow((0..x.len()).collect(), 0, rng);
        Self {
            nodes: b.nodes,
            n_features: d,
        }
    }

    /// Replaces each regression leaf value by `f(rows reaching it)`.
    pub(crate) fn relabel_leaves(&mut self, x: &[Vec<f64>], mut f: impl FnMut(&[usize]) -> f64) {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (r, row) in x.iter().enumerate() {
            let mut i = 0;
            while let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = &self.nodes[i]
            {
                i = if row[*feature] <= *threshold { *left } else { *right };
            }
            members[i].push(r);
        }
        for (node, m) in self.nodes.iter_mut().zip(&members) {
            if let Node::Leaf { value } = node {
                if !m.is_empty() {
                    value[0] = f(m);
                }
            }
        }
    }
}

enum Target<'a> {
    Class {
        y: &'a [usize],
        w: &'a [f64],
        n_classes: usize,
    },
    Value(&'a [f64]),
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    d: usize,
    params: &'a TreeParams,
    nodes: Vec<Node>,
    target: Target<'a>,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> Vec<f64> {
        match &self.target {
            Target::Class { y, w, n_classes } => {
                let mut dist = vec![0.0; *n_classes];
                for &i in idx {
                    dist[y[i]] += w[i];
                }
                let total: f64 = dist.iter().sum();
                if total > 0.0 {
                    dist.iter_mut().for_each(|v| *v /= total);
                }
                dist
            }
            Target::Value(t) => {
                let mean = idx.iter().map(|&i| t[i]).sum::<f64>() / idx.len().max(1) as f64;
                vec![mean]
            }
        }
    }

    /// Impurity of the node times its weight; zero means pure.
    fn impurity(&self, idx: &[usize]) -> f64 {
        match &self.target {
            Target::Class { y, w, n_classes } => {
                let mut dist = vec![0.0; *n_classes];
                for &i in idx {
                    dist[y[i]] += w[i];
                }
                gini_weighted(&dist)
            }
            Target::Value(t) => {
                let n = idx.len() as f64;
                let s: f64 = idx.iter().map(|&i| t[i]).sum();
                let ss: f64 = idx.iter().map(|&i| t[i] * t[i]).sum();
                (ss - s * s / n).max(0.0)
            }
        }
    }

    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn grow<R: Rng>(&mut self, idx: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let at_limit = self.params.max_depth.is_some_and(|m| depth >= m);
        let parent = self.impurity(&idx);
        if at_limit || idx.len() < self.params.min_samples_split.max(2) || parent <= 1e-12 {
            let value = self.leaf_value(&idx);
            return self.push(Node::Leaf { value });
        }
        let Some(best) = self.best_split(&idx, parent, rng) else {
            let value = self.leaf_value(&idx);
            return self.push(Node::Leaf { value });
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let me = self.push(Node::Leaf { value: Vec::new() });
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        me
    }

    fn best_split<R: Rng>(&self, idx: &[usize], parent: f64, rng: &mut R) -> Option<Best> {
        let order: Vec<usize> = match self.params.max_features {
            MaxFeatures::All => (0..self.d).collect(),
            // Random order; keep scanning past the first √d candidates
            // until one of them yields a usable split.
            MaxFeatures::Sqrt => sample(rng, self.d, self.d).into_vec(),
        };
        let quota = match self.params.max_features {
            MaxFeatures::All => self.d,
            MaxFeatures::Sqrt => ((self.d as f64).sqrt().floor() as usize).max(1),
        };
        let mut best: Option<Best> = None;
        for (n, &f) in order.iter().enumerate() {
            if n >= quota && best.is_some() {
                break;
            }
            if let Some(c) = self.best_on_feature(idx, f) {
                if c.score < parent - 1e-12 && best.as_ref().is_none_or(|b| c.score < b.score) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn best_on_feature(&self, idx: &[usize], f: usize) -> Option<Best> {
        let mut sorted: Vec<usize> = idx.to_vec();
        sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
        let mut best: Option<Best> = None;
        match &self.target {
            Target::Class { y, w, n_classes } => {
                let mut left = vec![0.0; *n_classes];
                let mut right = vec![0.0; *n_classes];
                for &i in &sorted {
                    right[y[i]] += w[i];
                }
                for k in 0..sorted.len() - 1 {
                    let i = sorted[k];
                    left[y[i]] += w[i];
                    right[y[i]] -= w[i];
                    let (a, b) = (self.x[i][f], self.x[sorted[k + 1]][f]);
                    if a == b {
                        continue;
                    }
                    let score = gini_weighted(&left) + gini_weighted(&right);
                    if best.as_ref().is_none_or(|bs| score < bs.score) {
                        best = Some(Best {
                            feature: f,
                            threshold: midpoint(a, b),
                            score,
                        });
                    }
                }
            }
            Target::Value(t) => {
                let n = sorted.len() as f64;
                let (mut ls, mut lss) = (0.0, 0.0);
                let ts: f64 = sorted.iter().map(|&i| t[i]).sum();
                let tss: f64 = sorted.iter().map(|&i| t[i] * t[i]).sum();
                for k in 0..sorted.len() - 1 {
                    let i = sorted[k];
                    ls += t[i];
                    lss += t[i] * t[i];
                    let (a, b) = (self.x[i][f], self.x[sorted[k + 1]][f]);
                    if a == b {
                        continue;
                    }
                    let nl = (k + 1) as f64;
                    let nr = n - nl;
                    let rs = ts - ls;
                    let rss = tss - lss;
                    let score = (lss - ls * ls / nl) + (rss - rs * rs / nr);
                    if best.as_ref().is_none_or(|bs| score < bs.score) {
                        best = Some(Best {
                            feature: f,
                            threshold: midpoint(a, b),
                            score,
                        });
                    }
                }
            }
        }
        best
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // Guard against the midpoint rounding up to `b`.
    if m >= b {
        a
    } else {
        m
    }
}

/// Gini impurity scaled by the node weight.
fn gini_weighted(dist: &[f64]) -> f64 {
    let total: f64 = dist.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let sq: f64 = dist.iter().map(|v| v * v).sum();
    total - sq / total
}
