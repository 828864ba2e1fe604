//! Evaluation engine for cross-spectral ocular (iris and periocular)
//! verification: embedding ingestion, pair protocols, cosine scoring,
//! score-level fusion and EER/decidability/ROC metrics.

pub mod cli;
pub mod embedding;
pub mod error;
pub mod format;
pub mod fusion;
pub mod matcher;
pub mod metrics;
pub mod par;
pub mod protocol;
pub mod synth;

pub use embedding::{
    load_embeddings, DatasetLayout, EmbeddingRecord, EmbeddingSet, Modality, RecordFilter, RecordKey,
    Spectrum,
};
pub use error::{Error, Result};
pub use fusion::{fuse_scores, fuse_spectral, weight_sweep, FusionSpec, SweepResult};
pub use matcher::{cosine_distance, score_pairs, ScoreSet};
pub use metrics::{aggregate_trials, decidability, eer, error_curve, roc_points, EvalReport, TrialAggregate};
pub use par::Execution;
pub use protocol::{
    enumerate_pairs, expected_counts, split_closed_world, split_open_world, ComparisonPair, Label, PairList,
    ProtocolKind, Scenario, SyncMode,
};
pub use synth::{gaussian_score_oracle, SynthConfig};
