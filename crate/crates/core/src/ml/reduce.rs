use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{Dataset, MlError, Representation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducerKind {
    Pca,
    Lda,
}

impl std::str::FromStr for ReducerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(Self::Pca),
            "lda" => Ok(Self::Lda),
            other => Err(format!("unknown reducer {other:?} (pca, lda)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducerSpec {
    pub kind: ReducerKind,
    pub n_components: usize,
}

/// Principal component projection. `components` rows are orthonormal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

/// Fisher discriminant projection. `components` rows are the
/// discriminant directions, normalized so `wᵀ S_w w = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reducer {
    Pca(Pca),
    Lda(Lda),
}

fn to_matrix(x: &[Vec<f64>]) -> DMatrix<f64> {
    let d = x.first().map_or(0, Vec::len);
    DMatrix::from_fn(x.len(), d, |i, j| x[i][j])
}

fn column_mean(x: &[Vec<f64>]) -> Vec<f64> {
    let d = x.first().map_or(0, Vec::len);
    let mut m = vec![0.0; d];
    for row in x {
        for (a, v) in m.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = x.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn check_dims(x: &[Vec<f64>]) -> Result<usize, MlError> {
    let d = x.first().map_or(0, Vec::len);
    if x.len() < 2 || d == 0 {
        return Err(MlError::InvalidDataset("reducer needs at least 2 rows and 1 feature".into()));
    }
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(MlError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    Ok(d)
}

/// Eigenpairs sorted by descending eigenvalue (stable on ties), each
/// vector flipped so its largest-magnitude coordinate is positive.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&l, v)| (l, v.into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, v) in &mut pairs {
        orient_sign(v.as_mut_slice());
    }
    pairs
}

fn orient_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&b| b < 0.0) {
        v.iter_mut().for_each(|a| *a = -*a);
    }
}

pub fn pca_fit(x: &[Vec<f64>], n_components: usize) -> Result<Pca, MlError> {
    let d = check_dims(x)?;
    let max = (x.len() - 1).min(d);
    if n_components < 1 || n_components > max {
        return Err(MlError::ComponentsOutOfRange {
            requested: n_components,
            max,
        });
    }
    let mean = column_mean(x);
    let mut c = to_matrix(x);
    for mut row in c.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v -= mean[j];
        }
    }
    let cov = (c.transpose() * &c) / (x.len() as f64 - 1.0);
    let pairs = sorted_eigen(cov);
    let (explained_variance, components) = pairs
        .into_iter()
        .take(n_components)
        .map(|(l, v)| (l.max(0.0), v.iter().copied().collect()))
        .unzip();
    Ok(Pca {
        mean,
        components,
        explained_variance,
    })
}

/// Fits a Fisher discriminant with `n_classes` classes indexed by `y`.
pub fn lda_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, n_components: usize) -> Result<Lda, MlError> {
    let d = check_dims(x)?;
    if y.len() != x.len() {
        return Err(MlError::InvalidDataset("label count differs from row count".into()));
    }
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        if c >= n_classes {
            return Err(MlError::InvalidDataset(format!("class index {c} out of range")));
        }
        counts[c] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(MlError::MissingClass {
            present,
            expected: n_classes.max(2),
        });
    }
    let max = (present - 1).min(d);
    if n_components < 1 || n_components > max {
        return Err(MlError::ComponentsOutOfRange {
            requested: n_components,
            max,
        });
    }

    let mean = column_mean(x);
    let mut class_mean = vec![vec![0.0; d]; n_classes];
    for (row, &c) in x.iter().zip(y) {
        for j in 0..d {
            class_mean[c][j] += row[j];
        }
    }
    for (m, &n) in class_mean.iter_mut().zip(&counts) {
        if n > 0 {
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
    }

    let mut sw = DMatrix::<f64>::zeros(d, d);
    for (row, &c) in x.iter().zip(y) {
        let diff = DVector::from_fn(d, |j, _| row[j] - class_mean[c][j]);
        sw += &diff * diff.transpose();
    }
    let mut sb = DMatrix::<f64>::zeros(d, d);
    for (m, &n) in class_mean.iter().zip(&counts) {
        if n > 0 {
            let diff = DVector::from_fn(d, |j, _| m[j] - mean[j]);
            sb += (&diff * diff.transpose()) * n as f64;
        }
    }
    let eps = 1e-6 * sw.trace() / d as f64;
    // A zero within-class scatter still needs a positive ridge.
    let eps = if eps > 0.0 { eps } else { 1e-12 };
    for i in 0..d {
        sw[(i, i)] += eps;
    }

    let chol = sw
        .cholesky()
        .ok_or_else(|| MlError::Linalg("within-class scatter is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| MlError::Linalg("singular Cholesky factor".into()))?;
    let mut m = &l_inv * sb * l_inv.transpose();
    // Symmetrize against round-off.
    m = (&m + m.transpose()) * 0.5;
    let pairs = sorted_eigen(m);
    let mut components = Vec::with_capacity(n_components);
    let mut eigenvalues = Vec::with_capacity(n_components);
    for (lambda, v) in pairs.into_iter().take(n_components) {
        let mut w: Vec<f64> = (l_inv.transpose() * v).iter().copied().collect();
        orient_sign(&mut w);
        components.push(w);
        eigenvalues.push(lambda.max(0.0));
    }
    Ok(Lda {
        mean,
        components,
        eigenvalues,
    })
}

fn project(mean: &[f64], components: &[Vec<f64>], row: &[f64]) -> Vec<f64> {
    components
        .iter()
        .map(|c| c.iter().zip(row.iter().zip(mean)).map(|(w, (v, m))| w * (v - m)).sum())
        .collect()
}

impl Pca {
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        project(&self.mean, &self.components, row)
    }

    pub fn inverse_transform_row(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &zk) in self.components.iter().zip(z) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += zk * w;
            }
        }
        out
    }
}

impl Lda {
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        project(&self.mean, &self.components, row)
    }
}

impl Reducer {
    pub fn fit(spec: &ReducerSpec, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<Self, MlError> {
        match spec.kind {
            ReducerKind::Pca => pca_fit(x, spec.n_components).map(Self::Pca),
            ReducerKind::Lda => lda_fit(x, y, n_classes, spec.n_components).map(Self::Lda),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Pca(p) => p.mean.len(),
            Self::Lda(l) => l.mean.len(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Pca(p) => p.components.len(),
            Self::Lda(l) => l.components.len(),
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>, MlError> {
        if row.len() != self.input_dim() {
            return Err(MlError::DimensionMismatch {
                expected: self.input_dim(),
                got: row.len(),
            });
        }
        Ok(match self {
            Self::Pca(p) => p.transform_row(row),
            Self::Lda(l) => l.transform_row(row),
        })
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MlError> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }

    /// Projects every row, producing a `Reduced` dataset with the same
    /// labels and ids.
    pub fn transform_dataset(&self, ds: &Dataset) -> Result<Dataset, MlError> {
        Ok(Dataset {
            x: self.transform(&ds.x)?,
            representation: Representation::Reduced,
            ..ds.clone()
        })
    }
}
