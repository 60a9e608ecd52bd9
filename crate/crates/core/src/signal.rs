//! Signal containers, pre-emphasis and utterance segmentation.

use crate::error::{Error, Result};

/// Mono audio with its sample rate. Samples are finite and, for decoded
/// files, normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("signal has no samples".into()));
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate_hz,
        )
    }
}

/// A fixed-length piece of a parent utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub parent_id: String,
    pub index: usize,
    pub signal: SampledSignal,
    pub label: Option<usize>,
}

/// First difference `p[n] = s[n] - s[n-1]` with `s[-1] = 0`.
pub fn pre_emphasize(signal: &SampledSignal) -> SampledSignal {
    SampledSignal {
        samples: first_difference(signal.samples()),
        sample_rate_hz: signal.sample_rate_hz,
    }
}

pub(crate) fn first_difference(x: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    x.iter()
        .map(|&v| {
            let d = v - prev;
            prev = v;
            d
        })
        .collect()
}

/// Splits an utterance into consecutive `seg_seconds` chunks. The remainder,
/// if any, becomes a shorter final segment. Every segment carries the
/// utterance id and label.
pub fn segment_utterance(
    parent_id: &str,
    signal: &SampledSignal,
    label: Option<usize>,
    seg_seconds: f64,
) -> Result<Vec<Segment>> {
    if !(seg_seconds > 0.0) || !seg_seconds.is_finite() {
        return Err(Error::Config(format!(
            "segment length must be positive, got {seg_seconds}"
        )));
    }
    if signal.is_empty() {
        return Err(Error::EmptyInput("cannot segment an empty signal".into()));
    }
    let seg_len = (seg_seconds * signal.sample_rate_hz as f64).round() as usize;
    if seg_len == 0 {
        return Err(Error::Config(format!(
            "segment of {seg_seconds} s is shorter than one sample"
        )));
    }
    Ok(signal
        .samples
        .chunks(seg_len)
        .enumerate()
        .map(|(index, chunk)| Segment {
            parent_id: parent_id.to_string(),
            index,
            signal: SampledSignal {
                samples: chunk.to_vec(),
                sample_rate_hz: signal.sample_rate_hz,
            },
            label,
        })
        .collect())
}
