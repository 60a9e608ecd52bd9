//! Utterance-level feature extraction and the corpus GCI scan.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::Manifest;
use crate::error::{Error, Result};
use crate::sff::{
    sff_envelope, FilterBank, DEFAULT_BAND_HI_HZ, DEFAULT_BAND_LO_HZ, DEFAULT_POLE_RADIUS,
    DEFAULT_SPACING_HZ,
};
use crate::signal::{pre_emphasize, segment_utterance, SampledSignal};
use crate::spectrogram::{
    fixed_frame_subsample, log_compress, pad_to_width, pitch_synchronous, stft_spectrogram,
    FeatureKind, FeatureMatrix, GciAveraging, StftConfig, DEFAULT_FIXED_FRAME_MS,
    DEFAULT_FIXED_FRAME_OVERLAP, DEFAULT_LOG_FLOOR, DEFAULT_WIDTH,
};
use crate::zff::{detect_gci, GciSequence, TrendWindow, ZffConfig, FALLBACK_PITCH_MS};

pub const DEFAULT_SEGMENT_SECONDS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionConfig {
    pub segment_seconds: f64,
    pub spacing_hz: f64,
    pub pole_radius: f64,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub zff: ZffConfig,
    pub averaging: GciAveraging,
    pub width: usize,
    pub log_floor: f64,
    pub fixed_frame_ms: f64,
    pub fixed_frame_overlap: f64,
    pub stft: StftConfig,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            segment_seconds: DEFAULT_SEGMENT_SECONDS,
            spacing_hz: DEFAULT_SPACING_HZ,
            pole_radius: DEFAULT_POLE_RADIUS,
            band_lo_hz: DEFAULT_BAND_LO_HZ,
            band_hi_hz: DEFAULT_BAND_HI_HZ,
            zff: ZffConfig::default(),
            averaging: GciAveraging::HalfOpen,
            width: DEFAULT_WIDTH,
            log_floor: DEFAULT_LOG_FLOOR,
            fixed_frame_ms: DEFAULT_FIXED_FRAME_MS,
            fixed_frame_overlap: DEFAULT_FIXED_FRAME_OVERLAP,
            stft: StftConfig::default(),
        }
    }
}

impl ExtractionConfig {
    pub fn filterbank(&self, sample_rate_hz: u32) -> Result<FilterBank> {
        FilterBank::new(
            sample_rate_hz,
            self.band_lo_hz,
            self.band_hi_hz,
            self.spacing_hz,
            self.pole_radius,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.segment_seconds > 0.0 && self.segment_seconds.is_finite()) {
            return Err(Error::Config(format!(
                "segment length {} s must be positive",
                self.segment_seconds
            )));
        }
        if self.width == 0 {
            return Err(Error::Config("feature width must be positive".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config(format!(
                "log floor {} must be positive",
                self.log_floor
            )));
        }
        self.zff.validate()
    }
}

/// All kinds requested for one segment, in request order.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeatures {
    pub index: usize,
    /// GCIs detected inside the segment.
    pub gci_count: usize,
    pub features: Vec<FeatureMatrix>,
}

/// GCIs of a whole utterance. The trend window comes from the utterance
/// pitch; utterances too short for a pitch estimate use the fallback window,
/// and those shorter than even that window have no GCIs.
pub fn utterance_gcis(signal: &SampledSignal, zff: &ZffConfig) -> Result<GciSequence> {
    match detect_gci(signal, zff) {
        Err(Error::InsufficientData(msg)) if zff.trend_window == TrendWindow::AutoPitch => {
            log::debug!("{msg}; using a {FALLBACK_PITCH_MS} ms trend window");
            let fixed = ZffConfig {
                trend_window: TrendWindow::FixedMs(FALLBACK_PITCH_MS),
                ..*zff
            };
            match detect_gci(signal, &fixed) {
                Err(Error::InsufficientData(_)) => {
                    GciSequence::new(Vec::new(), signal.sample_rate_hz())
                }
                other => other,
            }
        }
        other => other,
    }
}

fn segment_bounds(n: usize, fs: u32, seconds: f64) -> Vec<(usize, usize)> {
    let len = ((seconds * fs as f64).round() as usize).max(1);
    (0..n).step_by(len).map(|s| (s, (s + len).min(n))).collect()
}

/// GCIs falling in each segment, per segment.
pub fn segment_gci_counts(signal: &SampledSignal, config: &ExtractionConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let gcis = utterance_gcis(signal, &config.zff)?;
    Ok(segment_bounds(
        signal.len(),
        signal.sample_rate_hz(),
        config.segment_seconds,
    )
    .into_iter()
    .map(|(a, b)| gcis.window(a, b).len())
    .collect())
}

/// Splits the utterance into segments and builds each requested kind per
/// segment. GCIs are detected once on the whole utterance and windowed
/// into each segment.
pub fn extract_utterance(
    id: &str,
    signal: &SampledSignal,
    config: &ExtractionConfig,
    kinds: &[FeatureKind],
) -> Result<Vec<SegmentFeatures>> {
    config.validate()?;
    if kinds.is_empty() {
        return Err(Error::Config("no feature kinds requested".into()));
    }
    let fs = signal.sample_rate_hz();
    let bank = config.filterbank(fs)?;
    let needs_envelope = kinds.iter().any(|k| *k != FeatureKind::Stft);
    let gcis = if kinds.contains(&FeatureKind::PitchSyncSff) {
        Some(utterance_gcis(signal, &config.zff)?)
    } else {
        None
    };
    let raw = segment_utterance(id, signal, None, config.segment_seconds)?;
    let emphasized = segment_utterance(id, &pre_emphasize(signal), None, config.segment_seconds)?;
    let bounds = segment_bounds(signal.len(), fs, config.segment_seconds);

    let mut out = Vec::with_capacity(raw.len());
    for ((seg, pre), (start, end)) in raw.iter().zip(&emphasized).zip(bounds) {
        let env = if needs_envelope {
            Some(sff_envelope(&pre.signal, &bank)?)
        } else {
            None
        };
        let seg_gcis = gcis.as_ref().map(|g| g.window(start, end));
        let mut features = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let (matrix, freqs) = match kind {
                FeatureKind::PitchSyncSff => (
                    pitch_synchronous(
                        env.as_ref().expect("envelope computed"),
                        seg_gcis.as_ref().expect("gcis detected"),
                        config.averaging,
                    )?,
                    bank.bin_freqs_hz().to_vec(),
                ),
                FeatureKind::SffFixedFrame => (
                    fixed_frame_subsample(
                        env.as_ref().expect("envelope computed"),
                        config.fixed_frame_ms,
                        config.fixed_frame_overlap,
                    )?,
                    bank.bin_freqs_hz().to_vec(),
                ),
                FeatureKind::Stft => stft_spectrogram(&seg.signal, &config.stft)?,
            };
            let logged = log_compress(matrix, config.log_floor)?;
            features.push(pad_to_width(logged, config.width, kind, &freqs)?);
        }
        out.push(SegmentFeatures {
            index: seg.index,
            gci_count: seg_gcis.map_or(0, |g| g.len()),
            features,
        });
    }
    Ok(out)
}

/// `<id>_<segment:03>_<kind>.sffm`.
pub fn feature_file_name(id: &str, segment: usize, kind: FeatureKind) -> String {
    format!("{id}_{segment:03}_{kind}.sffm")
}

/// Feature files of one utterance, in segment order, stopping at the first
/// missing index.
pub fn feature_files(dir: &Path, id: &str, kind: FeatureKind) -> Vec<PathBuf> {
    (0..)
        .map(|s| dir.join(feature_file_name(id, s, kind)))
        .take_while(|p| p.is_file())
        .collect()
}

/// Largest pitch-synchronous column count (GCIs per segment minus one) over
/// every segment in the manifest; 0 for an empty manifest.
pub fn scan_max_gci(manifest: &Manifest, config: &ExtractionConfig) -> Result<usize> {
    config.validate()?;
    let per_entry: Vec<usize> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let signal = crate::wav::load_wav(&e.path, None)?;
            let counts = segment_gci_counts(&signal, config)?;
            Ok(counts
                .into_iter()
                .map(|c| c.saturating_sub(1))
                .max()
                .unwrap_or(0))
        })
        .collect::<Result<_>>()?;
    Ok(per_entry.into_iter().max().unwrap_or(0))
}
