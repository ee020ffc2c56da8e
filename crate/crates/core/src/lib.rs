//! Gait assessment core: the session data model and on-disk format, the
//! streaming protocol state machine, clinical gait feature extraction,
//! dashboard and overlay tools, a synthetic gait generator, and the
//! classification pipeline.

pub mod features;
pub mod ml;
pub mod model;
pub mod protocol;
pub mod rng;
pub mod signal;
pub mod sim;
pub mod store;

pub use features::{extract_features, feature_correlation, FeatureConfig, FeatureError, OrientedSignal, StepEvent};
pub use model::{
    ActivitySegment, EventMark, FeatureVector, Participant, Project, RecordingSession, SensorSample, SignalTrack,
    STANDARD_GRAVITY,
};
pub use protocol::{Message, SessionState};
pub use signal::{DashboardBundle, GaitEventName};
pub use sim::{preset, synthesize, GaitProfile, GroundTruth, PresetKind};
pub use store::{load_session, save_session, StoreError};

/// Fresh lexicographically sortable identifier (ULID).
pub fn new_id() -> String {
    ulid::Ulid::new().to_string()
}
