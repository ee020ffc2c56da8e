use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, MaxFeatures, TreeParams};
use super::{argmax, sigmoid};
use crate::rng::SeedStream;

/// Multi-class AdaBoost (SAMME) over depth-1 stumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub stumps: Vec<DecisionTree>,
    pub alphas: Vec<f64>,
    pub n_classes: usize,
    /// Training error of the partial ensemble after each round.
    pub staged_train_error: Vec<f64>,
    /// Mean of exp(−(v_true − v_best_other)/2) over training rows after
    /// each round; for two classes this bounds the training error.
    pub staged_exp_loss: Vec<f64>,
}

impl AdaBoost {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, n_estimators: usize, learning_rate: f64, seed: SeedStream) -> Self {
        let n = x.len();
        let k = n_classes as f64;
        let mut w = vec![1.0 / n as f64; n];
        let mut model = Self {
            stumps: Vec::new(),
            alphas: Vec::new(),
            n_classes,
            staged_train_error: Vec::new(),
            staged_exp_loss: Vec::new(),
        };
        let params = TreeParams {
            max_depth: Some(1),
            min_samples_split: 2,
            max_features: MaxFeatures::All,
        };
        let mut votes = vec![vec![0.0; n_classes]; n];
        let mut rng = seed.derive("adaboost").rng();
        for _ in 0..n_estimators {
            let stump = DecisionTree::fit_classifier(x, y, &w, n_classes, &params, &mut rng);
            let pred: Vec<usize> = x.iter().map(|r| stump.predict_class(r)).collect();
            let total: f64 = w.iter().sum();
            let err: f64 = pred.iter().zip(y).zip(&w).filter(|((p, t), _)| p != t).map(|(_, wi)| wi).sum::<f64>() / total;
            if err >= 1.0 - 1.0 / k {
                // No better than chance; further rounds cannot help.
                if model.stumps.is_empty() {
                    model.push(stump, 1.0, &pred, &mut votes, y);
                }
                break;
            }
            if err <= 0.0 {
                model.push(stump, 1.0, &pred, &mut votes, y);
                break;
            }
            let alpha = learning_rate * (((1.0 - err) / err).ln() + (k - 1.0).ln());
            for ((wi, p), t) in w.iter_mut().zip(&pred).zip(y) {
                if p != t {
                    *wi *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= s);
            model.push(stump, alpha, &pred, &mut votes, y);
        }
        model
    }

    fn push(&mut self, stump: DecisionTree, alpha: f64, pred: &[usize], votes: &mut [Vec<f64>], y: &[usize]) {
        for (v, &p) in votes.iter_mut().zip(pred) {
            v[p] += alpha;
        }
        let n = y.len() as f64;
        let wrong = votes.iter().zip(y).filter(|(v, &t)| argmax(v) != t).count();
        self.staged_train_error.push(wrong as f64 / n);
        let exp_loss: f64 = votes
            .iter()
            .zip(y)
            .map(|(v, &t)| {
                let other = v.iter().enumerate().filter(|(c, _)| *c != t).map(|(_, a)| *a).fold(f64::NEG_INFINITY, f64::max);
                (-(v[t] - other) / 2.0).exp()
            })
            .sum();
        self.staged_exp_loss.push(exp_loss / n);
        self.stumps.push(stump);
        self.alphas.push(alpha);
    }

    /// Vote shares per class; they sum to 1.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n_classes];
        for (s, a) in self.stumps.iter().zip(&self.alphas) {
            v[s.predict_class(row)] += a;
        }
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            v.iter_mut().for_each(|x| *x /= total);
        }
        v
    }
}

/// Bootstrap-aggregated CART trees. With `MaxFeatures::Sqrt` this is a
/// random forest, with `MaxFeatures::All` plain bagging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
}

impl Forest {
    /// Trees are grown in parallel; tree `i` draws only from substream
    /// `i`, so the result does not depend on scheduling.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, n_trees: usize, params: &TreeParams, seed: SeedStream) -> Self {
        let n = x.len();
        let stream = seed.derive("forest");
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream.child(i as u64).rng();
                let mut w = vec![0.0; n];
                for _ in 0..n {
                    w[rand::Rng::random_range(&mut rng, 0..n)] += 1.0;
                }
                DecisionTree::fit_classifier(x, y, &w, n_classes, params, &mut rng)
            })
            .collect();
        Self { trees, n_classes }
    }

    /// Mean of the per-tree class distributions.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, b) in p.iter_mut().zip(t.predict_proba(row)) {
                *a += b;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }
}

/// Gradient-boosted regression trees on logistic loss, one-vs-rest for
/// more than two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    /// One entry per binary sub-problem (a single one when C = 2).
    pub init: Vec<f64>,
    pub trees: Vec<Vec<DecisionTree>>,
    pub learning_rate: f64,
    pub n_classes: usize,
}

impl GradientBoosting {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        n_rounds: usize,
        max_depth: usize,
        learning_rate: f64,
        seed: SeedStream,
    ) -> Self {
        let problems: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
        let params = TreeParams {
            max_depth: Some(max_depth),
            min_samples_split: 2,
            max_features: MaxFeatures::All,
        };
        let mut init = Vec::new();
        let mut trees = Vec::new();
        for &c in &problems {
            let t: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v == c))).collect();
            let pos = t.iter().sum::<f64>().clamp(0.5, t.len() as f64 - 0.5);
            let f0 = (pos / (t.len() as f64 - pos)).ln();
            let mut f = vec![f0; x.len()];
            let mut rng = seed.derive("gbm").child(c as u64).rng();
            let mut stage = Vec::with_capacity(n_rounds);
            for _ in 0..n_rounds {
                let p: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
                let r: Vec<f64> = t.iter().zip(&p).map(|(ti, pi)| ti - pi).collect();
                let mut tree = DecisionTree::fit_regressor(x, &r, &params, &mut rng);
                // One Newton step per leaf.
                tree.relabel_leaves(x, |rows| {
                    let num: f64 = rows.iter().map(|&i| r[i]).sum();
                    let den: f64 = rows.iter().map(|&i| p[i] * (1.0 - p[i])).sum();
                    if den.abs() < 1e-12 {
                        0.0
                    } else {
                        num / den
                    }
                });
                for (fi, row) in f.iter_mut().zip(x) {
                    *fi += learning_rate * tree.predict_value(row);
                }
                stage.push(tree);
            }
            init.push(f0);
            trees.push(stage);
        }
        Self {
            init,
            trees,
            learning_rate,
            n_classes,
        }
    }

    fn margin(&self, k: usize, row: &[f64]) -> f64 {
        self.init[k] + self.trees[k].iter().map(|t| self.learning_rate * t.predict_value(row)).sum::<f64>()
    }

    /// Class probabilities; one-vs-rest outputs are renormalized.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        if self.n_classes == 2 {
            let p = sigmoid(self.margin(0, row));
            return vec![1.0 - p, p];
        }
        let mut s: Vec<f64> = (0..self.n_classes).map(|k| sigmoid(self.margin(k, row))).collect();
        let total: f64 = s.iter().sum();
        s.iter_mut().for_each(|v| *v /= total);
        s
    }
}
