//! Music features, motion feature extractors, and evaluation metrics.

pub mod features;
pub mod fid;
pub mod metrics;
pub mod music;
pub mod report;

pub use features::{
    cross_distance_features, geometric_feature_names, geometric_features, kinetic_features,
    FeatureKind, FeatureVector,
};
pub use fid::{diversity, frechet_distance};
pub use metrics::{
    contact_metrics, motion_beats, rhythm_metrics, ContactMetrics, RhythmConfig, RhythmMetrics,
};
pub use music::{metronome, MusicFeatures, MUSIC_DIM};
pub use report::{metrics_report, EvaluatedDuet, MetricsReport};
