//! Shared fixtures for the benchmarks.

use std::collections::BTreeMap;

use gaitway_core::ml::{build_dataset, Dataset, DatasetOptions, Representation};
use gaitway_core::model::{RecordingSession, SignalTrack};
use gaitway_core::protocol::SessionState;
use gaitway_core::sim::{preset, synthesize, PresetKind};

/// A six-minute typical-child track at 50 Hz.
pub fn walk_track(seed: u64) -> SignalTrack {
    synthesize(&preset(PresetKind::TypicalChild, seed), 360.0, 50.0)
        .expect("preset is valid")
        .0
}

/// Clinical-feature dataset of `n_per_class` subjects per class.
pub fn cohort(n_per_class: usize, duration_s: f64) -> Dataset {
    let mut sessions = Vec::new();
    let mut labels = BTreeMap::new();
    for i in 0..n_per_class as u64 {
        for (kind, label) in [(PresetKind::TypicalChild, "typical"), (PresetKind::ImpairedGait, "impaired")] {
            let participant = format!("{label}-{i}");
            let mut s = RecordingSession::new(format!("s-{participant}"), "bench", &participant, 50.0);
            s.track = synthesize(&preset(kind, 100 + i), duration_s, 50.0).expect("preset is valid").0;
            s.state = SessionState::Finalized;
            sessions.push(s);
            labels.insert(participant, label.to_string());
        }
    }
    let classes = ["typical".to_string(), "impaired".to_string()];
    build_dataset(&sessions, &labels, &classes, Representation::ClinicalFeatures, &DatasetOptions::default())
        .expect("cohort builds")
}
