//! Corpus-level plumbing: manifests, folds, extraction, training and
//! evaluation.

pub mod extract;
pub mod folds;
pub mod manifest;
pub mod metrics;
pub mod train;

pub use extract::{
    extract_utterance, feature_file_name, feature_files, scan_max_gci, segment_gci_counts,
    utterance_gcis, ExtractionConfig, SegmentFeatures, DEFAULT_SEGMENT_SECONDS,
};
pub use folds::{build_folds, FoldPlan, Role};
pub use manifest::{Emotion, Manifest, ManifestEntry};
pub use metrics::{
    aggregate_utterance, class_weights, evaluate, CrossValidationReport, EvalReport,
};
pub use train::{
    class_names, load_examples, predict_utterances, train_fold, train_model, write_history,
    EarlyStopping, EpochRecord, Example, SelectionMetric, TrainConfig, TrainOutcome,
    UtterancePrediction,
};
