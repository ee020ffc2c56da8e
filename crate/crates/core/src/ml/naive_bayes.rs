use serde::{Deserialize, Serialize};

use super::softmax_in_place;

const VAR_FLOOR: f64 = 1e-9;

/// Per-class diagonal Gaussian model with empirical priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_prior: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

impl GaussianNb {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut count = vec![0.0; n_classes];
        let mut mean = vec![vec![0.0; d]; n_classes];
        for (r, &c) in x.iter().zip(y) {
            count[c] += 1.0;
            for (m, v) in mean[c].iter_mut().zip(r) {
                *m += v;
            }
        }
        for (m, &n) in mean.iter_mut().zip(&count) {
            m.iter_mut().for_each(|v| *v /= f64::max(n, 1.0));
        }
        let mut var = vec![vec![0.0; d]; n_classes];
        for (r, &c) in x.iter().zip(y) {
            for j in 0..d {
                let dv = r[j] - mean[c][j];
                var[c][j] += dv * dv;
            }
        }
        for (v, &n) in var.iter_mut().zip(&count) {
            v.iter_mut().for_each(|s| *s = (*s / f64::max(n, 1.0)).max(VAR_FLOOR));
        }
        let total = x.len() as f64;
        let log_prior = count.iter().map(|&n| (n / total).ln()).collect();
        Self { log_prior, mean, var }
    }

    pub fn joint_log_likelihood(&self, row: &[f64]) -> Vec<f64> {
        self.log_prior
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(lp, (m, v))| {
                lp + row
                    .iter()
                    .zip(m.iter().zip(v))
                    .map(|(x, (mu, s))| -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (x - mu) * (x - mu) / s))
                    .sum::<f64>()
            })
            .collect()
    }

    /// Posterior class probabilities.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut z = self.joint_log_likelihood(row);
        softmax_in_place(&mut z);
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_feature_hits_floor() {
        let m = GaussianNb::fit(&[vec![1.0], vec![1.0], vec![2.0]], &[0, 0, 1], 2);
        assert_eq!(m.var[0][0], VAR_FLOOR);
        let s = m.scores(&[1.0]);
        assert!(s[0] > 0.999);
    }
}
