use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierKind, ClassifierSpec, LogisticRegression, MlError, Mlp};
use crate::rng::SeedStream;

const H: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub n_params: usize,
    /// max over parameters of |a − n| / max(|a| + |n|, 1e-8).
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares backpropagated gradients of a freshly initialized model with
/// central finite differences over every parameter.
///
/// Logistic models start from small seeded random weights rather than
/// zeros so that every weight carries a nonzero gradient.
pub fn gradient_check(spec: &ClassifierSpec, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<GradientCheck, MlError> {
    let r = spec.resolve()?;
    if x.len() > 32 {
        return Err(MlError::TooManyRows(x.len()));
    }
    let d = x.first().map_or(0, Vec::len);
    let seed = SeedStream::new(spec.seed);
    let (p0, loss, grad): (Vec<f64>, Box<dyn Fn(&[f64]) -> f64>, Vec<f64>) = match spec.kind {
        ClassifierKind::LogisticRegression => {
            let mut m = LogisticRegression::zeros(d, n_classes, r.l2);
            let mut rng = seed.derive("gradcheck").rng();
            let p: Vec<f64> = m.params().iter().map(|_| rng.random_range(-0.5..0.5)).collect();
            m.set_params(&p);
            let g = m.loss_and_gradient(x, y).1;
            let f = move |q: &[f64]| {
                let mut m = m.clone();
                m.set_params(q);
                m.loss(x, y)
            };
            (p, Box::new(f), g)
        }
        ClassifierKind::Mlp => {
            let sizes: Vec<usize> = std::iter::once(d).chain(r.hidden_sizes.iter().copied()).chain([n_classes]).collect();
            let m = Mlp::init(&sizes, r.l2, seed);
            let p = m.params();
            let g = m.loss_and_gradient(x, y).1;
            let f = move |q: &[f64]| {
                let mut m = m.clone();
                m.set_params(q);
                m.loss(x, y)
            };
            (p, Box::new(f), g)
        }
        other => return Err(MlError::NotDifferentiable(other.as_str())),
    };

    let mut numeric = Vec::with_capacity(p0.len());
    let mut q = p0.clone();
    for i in 0..p0.len() {
        q[i] = p0[i] + H;
        let up = loss(&q);
        q[i] = p0[i] - H;
        let down = loss(&q);
        q[i] = p0[i];
        numeric.push((up - down) / (2.0 * H));
    }
    let max_rel_error = grad
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max);
    Ok(GradientCheck {
        n_params: p0.len(),
        max_rel_error,
        analytic: grad,
        numeric,
    })
}
