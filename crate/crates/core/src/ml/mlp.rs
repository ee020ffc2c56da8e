use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, softmax_in_place};
use crate::rng::SeedStream;

/// Fully connected network: tanh hidden layers, softmax output,
/// cross-entropy loss, full-batch gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths from input to output.
    pub sizes: Vec<usize>,
    /// Per layer, `out × in` weights in row-major order.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub l2: f64,
    pub loss_history: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], l2: f64, seed: SeedStream) -> Self {
        let mut rng = seed.derive("mlp-init").rng();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            l2,
            loss_history: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        hidden: &[usize],
        epochs: usize,
        learning_rate: f64,
        l2: f64,
        seed: SeedStream,
    ) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let sizes: Vec<usize> = std::iter::once(d).chain(hidden.iter().copied()).chain([n_classes]).collect();
        let mut m = Self::init(&sizes, l2, seed);
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

    /// Activations of every layer, input first, softmax output last.
    fn forward(&self, row: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![row.to_vec()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = acts.last().expect("input layer");
            let n_in = input.len();
            let mut z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bo)| bo + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, v)| a * v).sum::<f64>())
                .collect();
            if l == last {
                softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.forward(row).pop().expect("output layer")
    }

    /// All weights layer by layer, then all biases layer by layer.
    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().flatten().chain(self.biases.iter().flatten()).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for v in self.weights.iter_mut().flatten().chain(self.biases.iter_mut().flatten()) {
            *v = it.next().expect("parameter count");
        }
    }

    pub fn loss(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        let n = x.len() as f64;
        let ce: f64 = x.iter().zip(y).map(|(r, &t)| -self.scores(r)[t].max(1e-300).ln()).sum::<f64>() / n;
        ce + 0.5 * self.l2 * self.weights.iter().flatten().map(|w| w * w).sum::<f64>()
    }

    pub fn loss_and_gradient(&self, x: &[Vec<f64>], y: &[usize]) -> (f64, Vec<f64>) {
        let n = x.len() as f64;
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut ce = 0.0;
        for (row, &t) in x.iter().zip(y) {
            let acts = self.forward(row);
            let out = acts.last().expect("output layer");
            ce -= out[t].max(1e-300).ln();
            let mut delta: Vec<f64> = out
                .iter()
                .enumerate()
                .map(|(c, p)| (p - f64::from(u8::from(c == t))) / n)
                .collect();
            for l in (0..self.weights.len()).rev() {
                let input = &acts[l];
                let n_in = input.len();
                for (o, &dl) in delta.iter().enumerate() {
                    gb[l][o] += dl;
                    for (g, v) in gw[l][o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += dl * v;
                    }
                }
                if l > 0 {
                    let w = &self.weights[l];
                    delta = (0..n_in)
                        .map(|i| {
                            let back: f64 = delta.iter().enumerate().map(|(o, dl)| dl * w[o * n_in + i]).sum();
                            back * (1.0 - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }
        let mut reg = 0.0;
        for (g, w) in gw.iter_mut().flatten().zip(self.weights.iter().flatten()) {
            *g += self.l2 * w;
            reg += w * w;
        }
        let loss = ce / n + 0.5 * self.l2 * reg;
        (loss, gw.into_iter().flatten().chain(gb.into_iter().flatten()).collect())
    }
}

/// Majority vote of independently seeded networks; member `i` uses
/// seed `seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpEnsemble {
    pub members: Vec<Mlp>,
    pub n_classes: usize,
}

impl MlpEnsemble {
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        hidden: &[usize],
        epochs: usize,
        learning_rate: f64,
        l2: f64,
        size: usize,
        seed: u64,
    ) -> Self {
        let members = (0..size as u64)
            .into_par_iter()
            .map(|i| {
                Mlp::fit(
                    x,
                    y,
                    n_classes,
                    hidden,
                    epochs,
                    learning_rate,
                    l2,
                    SeedStream::new(seed.wrapping_add(i)),
                )
            })
            .collect();
        Self { members, n_classes }
    }

    /// Vote shares; ties in the vote go to the lower class index.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for m in &self.members {
            votes[argmax(&m.scores(row))] += 1.0;
        }
        let n = self.members.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }
}
