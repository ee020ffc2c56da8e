use serde::{Deserialize, Serialize};

/// Euclidean k-nearest-neighbour vote over the stored training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Knn {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, k: usize) -> Self {
        Self {
            k: k.min(x.len()),
            x: x.to_vec(),
            y: y.to_vec(),
            n_classes,
        }
    }

    /// Vote shares of the `k` nearest rows. Equal distances are ordered
    /// by class index, then row index.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut d: Vec<(f64, usize, usize)> = self
            .x
            .iter()
            .zip(&self.y)
            .enumerate()
            .map(|(i, (r, &c))| (r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), c, i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut votes = vec![0.0; self.n_classes];
        for &(_, c, _) in d.iter().take(self.k) {
            votes[c] += 1.0;
        }
        let k = self.k as f64;
        votes.iter_mut().for_each(|v| *v /= k);
        votes
    }
}
