use serde::{Deserialize, Serialize};

use super::softmax_in_place;

/// Multinomial logistic regression trained by full-batch gradient
/// descent from zero weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    /// `n_classes` rows of `d` weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub l2: f64,
    pub loss_history: Vec<f64>,
}

impl LogisticRegression {
    pub fn zeros(d: usize, n_classes: usize, l2: f64) -> Self {
        Self {
            weights: vec![vec![0.0; d]; n_classes],
            bias: vec![0.0; n_classes],
            l2,
            loss_history: Vec::new(),
        }
    }

    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, epochs: usize, learning_rate: f64, l2: f64) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut m = Self::zeros(d, n_classes, l2);
        let mut p = m.params();
        for _ in 0..epochs {
            let (loss, g) = m.loss_and_gradient(x, y);
            m.loss_history.push(loss);
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi -= learning_rate * gi;
            }
            m.set_params(&p);
        }
        m
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>())
            .collect();
        softmax_in_place(&mut z);
        z
    }

    /// Weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().flatten().chain(&self.bias).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for w in self.weights.iter_mut().flatten() {
            *w = it.next().expect("parameter count");
        }
        for b in &mut self.bias {
            *b = it.next().expect("parameter count");
        }
    }

    /// Mean cross-entropy plus `l2/2 · ‖W‖²` (biases unpenalized).
    pub fn loss(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        let n = x.len() as f64;
        let ce: f64 = x.iter().zip(y).map(|(r, &t)| -self.scores(r)[t].max(1e-300).ln()).sum::<f64>() / n;
        ce + 0.5 * self.l2 * self.weights.iter().flatten().map(|w| w * w).sum::<f64>()
    }

    pub fn loss_and_gradient(&self, x: &[Vec<f64>], y: &[usize]) -> (f64, Vec<f64>) {
        let n = x.len() as f64;
        let k = self.bias.len();
        let d = self.weights.first().map_or(0, Vec::len);
        let mut gw = vec![vec![0.0; d]; k];
        let mut gb = vec![0.0; k];
        let mut ce = 0.0;
        for (row, &t) in x.iter().zip(y) {
            let p = self.scores(row);
            ce -= p[t].max(1e-300).ln();
            for c in 0..k {
                let delta = (p[c] - f64::from(u8::from(c == t))) / n;
                gb[c] += delta;
                for (g, v) in gw[c].iter_mut().zip(row) {
                    *g += delta * v;
                }
            }
        }
        let mut reg = 0.0;
        for (g, w) in gw.iter_mut().flatten().zip(self.weights.iter().flatten()) {
            *g += self.l2 * w;
            reg += w * w;
        }
        let loss = ce / n + 0.5 * self.l2 * reg;
        (loss, gw.into_iter().flatten().chain(gb).collect())
    }
}

/// Linear SVM on L2-regularized hinge loss, trained by full-batch
/// subgradient descent with a `lr/√t` step. One-vs-rest for more than
/// two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    /// One hyperplane per binary sub-problem (a single one when C = 2).
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub n_classes: usize,
}

impl LinearSvm {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, epochs: usize, learning_rate: f64, l2: f64) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let problems: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
        let mut weights = Vec::new();
        let mut bias = Vec::new();
        for &c in &problems {
            let t: Vec<f64> = y.iter().map(|&v| if v == c { 1.0 } else { -1.0 }).collect();
            let mut w = vec![0.0; d];
            let mut b = 0.0;
            for epoch in 0..epochs {
                let mut gw: Vec<f64> = w.iter().map(|wi| l2 * wi).collect();
                let mut gb = 0.0;
                for (row, &ti) in x.iter().zip(&t) {
                    let margin = ti * (b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>());
                    if margin < 1.0 {
                        for (g, v) in gw.iter_mut().zip(row) {
                            *g -= ti * v / n;
                        }
                        gb -= ti / n;
                    }
                }
                let step = learning_rate / ((epoch + 1) as f64).sqrt();
                for (wi, g) in w.iter_mut().zip(&gw) {
                    *wi -= step * g;
                }
                b -= step * gb;
            }
            weights.push(w);
            bias.push(b);
        }
        Self {
            weights,
            bias,
            n_classes,
        }
    }

    fn decision(&self, k: usize, row: &[f64]) -> f64 {
        self.bias[k] + self.weights[k].iter().zip(row).map(|(a, v)| a * v).sum::<f64>()
    }

    /// Signed distances to each hyperplane (not probabilities).
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        if self.n_classes == 2 {
            let m = self.decision(0, row);
            vec![-m, m]
        } else {
            (0..self.n_classes).map(|k| self.decision(k, row)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::argmax;
    use super::*;

    #[test]
    fn logistic_gradient_at_zero_is_symmetric() {
        let x = vec![vec![1.0, 2.0], vec![-1.0, -2.0]];
        let y = vec![0, 1];
        let m = LogisticRegression::zeros(2, 2, 1e-4);
        let (loss, g) = m.loss_and_gradient(&x, &y);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(g[4].abs() < 1e-10 && g[5].abs() < 1e-10);
    }

    #[test]
    fn logistic_loss_decreases() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let m = LogisticRegression::fit(&x, &y, 2, 100, 0.5, 1e-4);
        assert!(m.loss_history.windows(2).all(|w| w[1] < w[0]));
        let s = m.scores(&x[3]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svm_separates_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 9.5, 1.0]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let m = LinearSvm::fit(&x, &y, 2, 500, 0.1, 1e-3);
        assert!(x.iter().zip(&y).all(|(r, &t)| argmax(&m.scores(r)) == t));
    }
}
