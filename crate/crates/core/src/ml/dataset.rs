use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MlError;
use crate::features::{analysis_window, extract_features, reorient, FeatureConfig};
use crate::model::RecordingSession;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// One row of eight clinical features per session.
    ClinicalFeatures,
    /// Fixed-length windows of forward acceleration, one row each.
    RawWindows,
    /// Output of a fitted reducer.
    Reduced,
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "features" | "clinical_features" => Ok(Self::ClinicalFeatures),
            "raw" | "raw_windows" => Ok(Self::RawWindows),
            "reduced" => Ok(Self::Reduced),
            other => Err(format!("unknown representation {other:?} (features, raw, reduced)")),
        }
    }
}

/// A labeled example matrix. Rows sharing a `subject_id` come from the
/// same participant; `group_ids` name the session each row came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub subject_ids: Vec<String>,
    pub group_ids: Vec<String>,
    pub representation: Representation,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<(), MlError> {
        let bad = |m: String| Err(MlError::InvalidDataset(m));
        let n = self.x.len();
        if n < 2 {
            return bad(format!("{n} rows; at least 2 required"));
        }
        if self.y.len() != n || self.subject_ids.len() != n || self.group_ids.len() != n {
            return bad("row metadata lengths differ".into());
        }
        let d = self.n_features();
        if d == 0 {
            return bad("rows have no features".into());
        }
        for (i, row) in self.x.iter().enumerate() {
            if row.len() != d {
                return bad(format!("row {i} has {} features, expected {d}", row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return bad(format!("row {i} contains NaN or infinity"));
            }
        }
        let mut counts = vec![0usize; self.class_names.len()];
        for &c in &self.y {
            match counts.get_mut(c) {
                Some(slot) => *slot += 1,
                None => return bad(format!("class index {c} out of range")),
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return bad(format!("class {:?} has no examples", self.class_names[empty]));
        }
        Ok(())
    }

    /// Number of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        let mut s = self.subject_ids.clone();
        s.sort();
        s.dedup();
        s
    }

    pub fn rows(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| self.x[i].clone()).collect(),
            idx.iter().map(|&i| self.y[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub window_s: Option<f64>,
    pub stride_s: Option<f64>,
    pub features: FeatureConfig,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            window_s: None,
            stride_s: None,
            features: FeatureConfig::default(),
        }
    }
}

/// The rows one session contributes: a single clinical feature row, or
/// mean-removed forward acceleration windows.
pub fn session_rows(
    s: &RecordingSession,
    representation: Representation,
    opts: &DatasetOptions,
) -> Result<Vec<Vec<f64>>, MlError> {
    match representation {
        Representation::ClinicalFeatures => Ok(vec![extract_features(s, None, &opts.features)?.as_row().to_vec()]),
        Representation::RawWindows => {
            let (Some(window_s), Some(stride_s)) = (opts.window_s, opts.stride_s) else {
                return Err(MlError::InvalidOptions("raw windows need window_s and stride_s".into()));
            };
            if !(window_s > 0.0 && stride_s > 0.0) {
                return Err(MlError::InvalidOptions("window_s and stride_s must be positive".into()));
            }
            let rate = s.track.nominal_rate_hz;
            let mut sig = reorient(&s.track, &opts.features)?;
            if let Some((a, b)) = analysis_window(s, None) {
                sig = sig.slice(a, b);
            }
            let w = (window_s * rate).round() as usize;
            let stride = ((stride_s * rate).round() as usize).max(1);
            let len = sig.forward.len();
            if w == 0 || w > len {
                return Err(MlError::WindowTooLong {
                    session: s.id.clone(),
                    window: w,
                    len,
                });
            }
            Ok((0..=len - w)
                .step_by(stride)
                .map(|start| {
                    let win = &sig.forward[start..start + w];
                    let mean = win.iter().sum::<f64>() / w as f64;
                    win.iter().map(|v| v - mean).collect()
                })
                .collect())
        }
        Representation::Reduced => Err(MlError::InvalidOptions(
            "reduced datasets are produced by applying a fitted reducer".into(),
        )),
    }
}

/// Builds a dataset from finalized sessions.
///
/// `labels` maps participant id to class name; `class_names` fixes the
/// class order, and classes without any example are dropped. Reduced
/// datasets come from [`super::Reducer::transform_dataset`], not from here.
pub fn build_dataset(
    sessions: &[RecordingSession],
    labels: &BTreeMap<String, String>,
    class_names: &[String],
    representation: Representation,
    opts: &DatasetOptions,
) -> Result<Dataset, MlError> {
    let mut labeled = Vec::with_capacity(sessions.len());
    for s in sessions {
        let label = labels
            .get(&s.participant_id)
            .ok_or_else(|| MlError::Unlabeled(s.participant_id.clone()))?;
        let class = class_names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| MlError::UnknownLabel(label.clone()))?;
        labeled.push((s, class));
    }

    if representation == Representation::RawWindows {
        let mut rates = labeled.iter().map(|(s, _)| s.track.nominal_rate_hz);
        if let Some(first) = rates.next() {
            if rates.any(|r| r != first) {
                return Err(MlError::InvalidOptions("sessions have different sampling rates".into()));
            }
        }
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut subject_ids = Vec::new();
    let mut group_ids = Vec::new();
    for (s, class) in labeled {
        for row in session_rows(s, representation, opts)? {
            x.push(row);
            y.push(class);
            subject_ids.push(s.participant_id.clone());
            group_ids.push(s.id.clone());
        }
    }

    // Keep only classes that occur, in the given order.
    let mut present = vec![false; class_names.len()];
    for &c in &y {
        present[c] = true;
    }
    let remap: Vec<Option<usize>> = present
        .iter()
        .scan(0, |next, &p| {
            Some(p.then(|| {
                *next += 1;
                *next - 1
            }))
        })
        .collect();
    let y = y.into_iter().map(|c| remap[c].expect("present class")).collect();
    let class_names = class_names
        .iter()
        .zip(&present)
        .filter(|(_, p)| **p)
        .map(|(c, _)| c.clone())
        .collect();

    let ds = Dataset {
        x,
        y,
        subject_ids,
        group_ids,
        representation,
        class_names,
    };
    ds.validate()?;
    Ok(ds)
}

/// Column z-scoring. Constant columns are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for j in 0..d {
                let dv = row[j] - mean[j];
                var[j] += dv * dv;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }
}
