//! Pitch-synchronous single frequency filtering (SFF) spectrograms.
//!
//! The crate covers the whole feature and classification chain:
//!
//! * [`signal`] and [`wav`]: audio ingestion, pre-emphasis and fixed-length segmentation.
//! * [`sff`]: the per-sample SFF amplitude envelope for a bank of single-pole filters.
//! * [`zff`]: glottal closure instant (GCI) detection by zero frequency filtering.
//! * [`spectrogram`]: pitch-synchronous SFF, fixed-frame SFF and STFT feature matrices,
//!   plus their on-disk formats.
//! * [`nn`]: a small CNN stack (convolution, batch norm, ReLU, adaptive max pooling,
//!   dense, softmax) with exact backpropagation and Adam.
//! * [`pipeline`]: manifests, leave-one-speaker-out folds, training with early stopping,
//!   utterance aggregation and WA/UWA metrics.
//! * [`synth`]: deterministic synthetic test signals.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod nn;
pub mod pipeline;
pub mod sff;
pub mod signal;
pub mod spectrogram;
pub mod synth;
pub mod wav;
pub mod zff;

pub use error::{Error, Result};
pub use nn::{ModelConfig, ModelState, Tensor};
pub use pipeline::{EvalReport, FoldPlan, Manifest};
pub use sff::{FilterBank, SffEnvelope};
pub use signal::{SampledSignal, Segment};
pub use spectrogram::{FeatureKind, FeatureMatrix};
pub use zff::{GciSequence, ZffConfig};
