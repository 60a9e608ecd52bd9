//! Time-frequency feature matrices.
//!
//! Three representations share one K x W layout: the pitch-synchronous SFF
//! spectrogram (envelope averaged between consecutive GCIs), the fixed-frame
//! SFF spectrogram (envelope averaged over overlapping frames), and a
//! Hamming-windowed STFT magnitude. All are log compressed and then right
//! padded with zeros to a fixed width.

mod format;
mod stft;

pub use format::{read_feature_matrix, write_feature_matrix, FORMAT_VERSION, MAGIC};
pub use stft::{hamming, stft_spectrogram, StftConfig};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sff::SffEnvelope;
use crate::zff::GciSequence;

pub const DEFAULT_LOG_FLOOR: f64 = 1e-10;
pub const DEFAULT_WIDTH: usize = 1077;
pub const DEFAULT_FIXED_FRAME_MS: f64 = 20.0;
pub const DEFAULT_FIXED_FRAME_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    PitchSyncSff,
    SffFixedFrame,
    Stft,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [Self::PitchSyncSff, Self::SffFixedFrame, Self::Stft];

    pub fn code(self) -> u8 {
        match self {
            Self::PitchSyncSff => 0,
            Self::SffFixedFrame => 1,
            Self::Stft => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PitchSyncSff => "pitch_sync_sff",
            Self::SffFixedFrame => "sff_fixed_frame",
            Self::Stft => "stft",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature kind {s:?}")))
    }
}

/// How the per-interval GCI average is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GciAveraging {
    /// Mean over `[s_l, s_{l+1})`.
    #[default]
    HalfOpen,
    /// Sum over `[s_l, s_{l+1}]` divided by `s_{l+1} - s_l`, kept for comparison.
    InclusiveSum,
}

/// Unpadded K x L matrix with per-column time stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFreqMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols`.
    pub values: Vec<f64>,
    pub column_times_s: Vec<f64>,
}

impl TimeFreqMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    fn from_columns(rows: usize, columns: Vec<(f64, Vec<f64>)>) -> Self {
        let cols = columns.len();
        let mut values = vec![0.0; rows * cols];
        let mut column_times_s = Vec::with_capacity(cols);
        for (c, (t, col)) in columns.into_iter().enumerate() {
            for (r, v) in col.into_iter().enumerate() {
                values[r * cols + c] = v;
            }
            column_times_s.push(t);
        }
        Self {
            rows,
            cols,
            values,
            column_times_s,
        }
    }
}

/// Fixed-width, log-compressed feature matrix; the CNN input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub(crate) values: Vec<f64>,
    pub(crate) kind: FeatureKind,
    pub(crate) bin_freqs_hz: Vec<f64>,
    pub(crate) column_times_s: Vec<f64>,
    pub(crate) pad_columns: usize,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.bin_freqs_hz.len()
    }
    pub fn width(&self) -> usize {
        self.column_times_s.len()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn kind(&self) -> FeatureKind {
        self.kind
    }
    pub fn bin_freqs_hz(&self) -> &[f64] {
        &self.bin_freqs_hz
    }
    pub fn column_times_s(&self) -> &[f64] {
        &self.column_times_s
    }
    pub fn pad_columns(&self) -> usize {
        self.pad_columns
    }
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width() + col]
    }
    /// Number of columns carrying data.
    pub fn used_columns(&self) -> usize {
        self.width() - self.pad_columns
    }

    /// One line per frequency bin: the bin frequency followed by the row.
    /// The header lists column times.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_hz");
        for t in &self.column_times_s {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        let w = self.width();
        for (r, f) in self.bin_freqs_hz.iter().enumerate() {
            out.push_str(&f.to_string());
            for v in &self.values[r * w..(r + 1) * w] {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Binary 8-bit PGM. Values of the used columns are scaled linearly
    /// from their min (black) to max (white); padding is black. The highest
    /// frequency bin is the top image row.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (rows, w, used) = (self.rows(), self.width(), self.used_columns());
        let (lo, hi) = (0..rows)
            .flat_map(|r| self.values[r * w..r * w + used].iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        let mut out = format!("P5\n{w} {rows}\n255\n").into_bytes();
        for r in (0..rows).rev() {
            for c in 0..w {
                let px = if c >= used || !(span > 0.0) {
                    0
                } else {
                    (255.0 * (self.values[r * w + c] - lo) / span).round() as u8
                };
                out.push(px);
            }
        }
        out
    }
}

/// Mean of the envelope between consecutive GCIs; one column per interval.
pub fn pitch_sync_subsample(
    env: &SffEnvelope,
    gcis: &GciSequence,
    averaging: GciAveraging,
) -> Result<TimeFreqMatrix> {
    let locs = gcis.locations();
    if locs.len() < 2 {
        return Err(Error::InsufficientGci(locs.len()));
    }
    let n = env.n_samples();
    if let Some(&last) = locs.last() {
        if last >= n {
            return Err(Error::Domain(format!(
                "GCI at sample {last} beyond envelope of {n} samples"
            )));
        }
    }
    let fs = env.filterbank().sample_rate_hz() as f64;
    let rows = env.num_bins();
    let columns = locs
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (end, divisor) = match averaging {
                GciAveraging::HalfOpen => (b, (b - a) as f64),
                GciAveraging::InclusiveSum => (b + 1, (b - a) as f64),
            };
            let col = (0..rows)
                .map(|k| env.row(k)[a..end].iter().sum::<f64>() / divisor)
                .collect();
            (0.5 * (a + b) as f64 / fs, col)
        })
        .collect();
    Ok(TimeFreqMatrix::from_columns(rows, columns))
}

/// Single column holding the per-bin mean of the whole envelope; stands in
/// for segments with fewer than two GCIs.
pub fn whole_mean_column(env: &SffEnvelope) -> TimeFreqMatrix {
    let n = env.n_samples();
    let col = (0..env.num_bins())
        .map(|k| env.row(k).iter().sum::<f64>() / n as f64)
        .collect();
    let t = 0.5 * n as f64 / env.filterbank().sample_rate_hz() as f64;
    TimeFreqMatrix::from_columns(env.num_bins(), vec![(t, col)])
}

/// Pitch-synchronous subsampling with the silent-segment fallback.
pub fn pitch_synchronous(
    env: &SffEnvelope,
    gcis: &GciSequence,
    averaging: GciAveraging,
) -> Result<TimeFreqMatrix> {
    match pitch_sync_subsample(env, gcis, averaging) {
        Err(Error::InsufficientGci(_)) => Ok(whole_mean_column(env)),
        other => other,
    }
}

/// Frame `[start, end)` boundaries for fixed-frame averaging.
pub(crate) fn frame_bounds(n: usize, frame: usize, hop: usize) -> Vec<(usize, usize)> {
    if n <= frame {
        return vec![(0, n)];
    }
    let mut out: Vec<(usize, usize)> = (0..)
        .map(|i| i * hop)
        .take_while(|&s| s + frame <= n)
        .map(|s| (s, s + frame))
        .collect();
    let last_start = out.last().map(|f| f.0).unwrap_or(0);
    if last_start + frame < n {
        out.push((last_start + hop, n));
    }
    out
}

/// Envelope mean over frames of `frame_ms` with the given overlap. A final
/// partial frame is averaged over its actual length.
pub fn fixed_frame_subsample(
    env: &SffEnvelope,
    frame_ms: f64,
    overlap_fraction: f64,
) -> Result<TimeFreqMatrix> {
    if !(frame_ms > 0.0) {
        return Err(Error::Config(format!(
            "frame length {frame_ms} ms must be positive"
        )));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::Config(format!(
            "overlap {overlap_fraction} outside [0, 1)"
        )));
    }
    let fs = env.filterbank().sample_rate_hz() as f64;
    let frame = ((frame_ms * fs / 1000.0).round() as usize).max(1);
    let hop = ((frame as f64 * (1.0 - overlap_fraction)).round() as usize).max(1);
    let rows = env.num_bins();
    let columns = frame_bounds(env.n_samples(), frame, hop)
        .into_iter()
        .map(|(a, b)| {
            let col = (0..rows)
                .map(|k| env.row(k)[a..b].iter().sum::<f64>() / (b - a) as f64)
                .collect();
            (0.5 * (a + b) as f64 / fs, col)
        })
        .collect();
    Ok(TimeFreqMatrix::from_columns(rows, columns))
}

/// `ln(max(u, floor))` elementwise.
pub fn log_compress(mut m: TimeFreqMatrix, floor: f64) -> Result<TimeFreqMatrix> {
    if !(floor > 0.0) {
        return Err(Error::Config(format!("log floor {floor} must be positive")));
    }
    if let Some(v) = m.values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("cannot log-compress entry {v}")));
    }
    for v in m.values.iter_mut() {
        *v = v.max(floor).ln();
    }
    Ok(m)
}

/// Right-pads with zero columns to `width`; wider inputs are truncated from
/// the right with a warning. Pad columns repeat the last real time stamp.
pub fn pad_to_width(
    m: TimeFreqMatrix,
    width: usize,
    kind: FeatureKind,
    bin_freqs_hz: &[f64],
) -> Result<FeatureMatrix> {
    if width == 0 || m.cols == 0 {
        return Err(Error::Config(
            "feature matrices need at least one column".into(),
        ));
    }
    if bin_freqs_hz.len() != m.rows {
        return Err(Error::Config(format!(
            "{} bin frequencies for {} rows",
            bin_freqs_hz.len(),
            m.rows
        )));
    }
    if m.cols > width {
        log::warn!(
            "{kind}: {} columns truncated to {width}, {} dropped",
            m.cols,
            m.cols - width
        );
    }
    let used = m.cols.min(width);
    let mut values = vec![0.0; m.rows * width];
    for r in 0..m.rows {
        values[r * width..r * width + used]
            .copy_from_slice(&m.values[r * m.cols..r * m.cols + used]);
    }
    let mut column_times_s = m.column_times_s[..used].to_vec();
    let last = column_times_s[used - 1];
    column_times_s.resize(width, last);
    Ok(FeatureMatrix {
        values,
        kind,
        bin_freqs_hz: bin_freqs_hz.to_vec(),
        column_times_s,
        pad_columns: width - used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sff::FilterBank;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bank(rows: usize, fs: u32) -> FilterBank {
        FilterBank::new(fs, 0.0, fs as f64 / 2.0, fs as f64 / 2.0 / rows as f64, 0.9).unwrap()
    }

    fn env_from(rows: Vec<Vec<f64>>, fs: u32) -> SffEnvelope {
        let n = rows[0].len();
        let b = bank(rows.len(), fs);
        SffEnvelope::from_values(rows.concat(), b, n).unwrap()
    }

    fn random_env(rows: usize, n: usize, seed: u64) -> SffEnvelope {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        env_from(
            (0..rows)
                .map(|_| (0..n).map(|_| rng.gen_range(0.0..5.0)).collect())
                .collect(),
            16000,
        )
    }

    #[test]
    fn pitch_sync_examples() {
        let env = env_from(vec![vec![2.0, 4.0, 6.0, 8.0]], 16000);
        let g = GciSequence::new(vec![0, 2], 16000).unwrap();
        let m = pitch_sync_subsample(&env, &g, GciAveraging::HalfOpen).unwrap();
        assert_eq!((m.rows, m.cols), (1, 1));
        assert_eq!(m.get(0, 0), 3.0);
        let lit = pitch_sync_subsample(&env, &g, GciAveraging::InclusiveSum).unwrap();
        assert_eq!(lit.get(0, 0), 6.0);

        let c = env_from(vec![vec![1.5; 50], vec![1.5; 50]], 16000);
        let g = GciSequence::new(vec![3, 10, 11, 40], 16000).unwrap();
        let m = pitch_sync_subsample(&c, &g, GciAveraging::HalfOpen).unwrap();
        assert_eq!(m.cols, 3);
        assert!(m.values.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn pitch_sync_errors_and_fallback() {
        let env = random_env(3, 100, 1);
        let one = GciSequence::new(vec![5], 16000).unwrap();
        assert!(matches!(
            pitch_sync_subsample(&env, &one, GciAveraging::HalfOpen),
            Err(Error::InsufficientGci(1))
        ));
        let m = pitch_synchronous(&env, &one, GciAveraging::HalfOpen).unwrap();
        assert_eq!(m.cols, 1);
        for k in 0..3 {
            let mean = env.row(k).iter().sum::<f64>() / 100.0;
            assert!((m.get(k, 0) - mean).abs() < 1e-12);
        }
        let far = GciSequence::new(vec![5, 100], 16000).unwrap();
        assert!(pitch_sync_subsample(&env, &far, GciAveraging::HalfOpen).is_err());
    }

    #[test]
    fn pitch_sync_matches_loop_oracle() {
        let env = random_env(4, 500, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut locs: Vec<usize> = (0..30).map(|_| rng.gen_range(0..500)).collect();
        locs.sort_unstable();
        locs.dedup();
        let g = GciSequence::new(locs.clone(), 16000).unwrap();
        let m = pitch_sync_subsample(&env, &g, GciAveraging::HalfOpen).unwrap();
        assert_eq!(m.cols, locs.len() - 1);
        for k in 0..4 {
            for l in 0..locs.len() - 1 {
                let mut s = 0.0;
                let mut cnt = 0;
                let mut i = locs[l];
                while i < locs[l + 1] {
                    s += env.get(k, i);
                    cnt += 1;
                    i += 1;
                }
                assert!((m.get(k, l) - s / cnt as f64).abs() <= 1e-12 * (s / cnt as f64));
            }
        }
    }

    #[test]
    fn fixed_frame_counts() {
        let env = env_from(vec![vec![0.7; 48000]], 16000);
        let m = fixed_frame_subsample(&env, 20.0, 0.5).unwrap();
        assert_eq!(m.cols, (48000 - 320) / 160 + 1);
        assert!(m.values.iter().all(|&v| (v - 0.7).abs() < 1e-12));

        let env = env_from(vec![vec![0.7; 1000]], 16000);
        let m = fixed_frame_subsample(&env, 20.0, 0.5).unwrap();
        // full frames start at 0..=640, the tail [800, 1000) is partial
        assert_eq!(m.cols, (1000 - 320) / 160 + 1 + 1);

        let env = env_from(vec![vec![1.0, 2.0, 3.0]], 16000);
        let m = fixed_frame_subsample(&env, 20.0, 0.5).unwrap();
        assert_eq!(m.cols, 1);
        assert_eq!(m.get(0, 0), 2.0);
        assert!(fixed_frame_subsample(&env, 0.0, 0.5).is_err());
        assert!(fixed_frame_subsample(&env, 20.0, 1.0).is_err());
    }

    #[test]
    fn fixed_frame_matches_oracle() {
        let env = random_env(3, 2345, 9);
        let m = fixed_frame_subsample(&env, 20.0, 0.5).unwrap();
        // independent framing: walk starts by hop, clip at the end, stop
        // once a frame reaches the end
        let (frame, hop) = (320usize, 160usize);
        let mut frames = Vec::new();
        let mut s = 0;
        loop {
            let e = (s + frame).min(2345);
            frames.push((s, e));
            if e == 2345 {
                break;
            }
            s += hop;
        }
        assert_eq!(frames.len(), m.cols);
        for (c, (a, b)) in frames.into_iter().enumerate() {
            for k in 0..3 {
                let mean = env.row(k)[a..b].iter().sum::<f64>() / (b - a) as f64;
                assert!((m.get(k, c) - mean).abs() <= 1e-12 * mean);
            }
        }
    }

    #[test]
    fn log_examples() {
        let m = TimeFreqMatrix {
            rows: 1,
            cols: 3,
            values: vec![1.0, std::f64::consts::E, 0.0],
            column_times_s: vec![0.0, 1.0, 2.0],
        };
        let l = log_compress(m.clone(), DEFAULT_LOG_FLOOR).unwrap();
        assert_eq!(l.values[0], 0.0);
        assert!((l.values[1] - 1.0).abs() < 1e-15);
        assert!((l.values[2] - (-23.025850929940457)).abs() < 1e-12);
        let mut bad = m;
        bad.values[1] = -1.0;
        assert!(matches!(log_compress(bad, 1e-10), Err(Error::Domain(_))));
    }

    fn mat(rows: usize, cols: usize) -> TimeFreqMatrix {
        TimeFreqMatrix {
            rows,
            cols,
            values: (0..rows * cols).map(|i| -(i as f64) - 1.0).collect(),
            column_times_s: (0..cols).map(|c| c as f64 * 0.01).collect(),
        }
    }

    #[test]
    fn padding_examples() {
        let freqs: Vec<f64> = (1..=200).map(|k| 20.0 * k as f64).collect();
        let f = pad_to_width(mat(200, 1000), 1077, FeatureKind::PitchSyncSff, &freqs).unwrap();
        assert_eq!((f.rows(), f.width(), f.pad_columns()), (200, 1077, 77));
        for r in 0..200 {
            assert!((1000..1077).all(|c| f.get(r, c) == 0.0));
            assert_eq!(f.get(r, 999), -((r * 1000 + 999) as f64) - 1.0);
        }
        let f = pad_to_width(mat(200, 1077), 1077, FeatureKind::Stft, &freqs).unwrap();
        assert_eq!(f.pad_columns(), 0);
        let f = pad_to_width(mat(200, 1100), 1077, FeatureKind::Stft, &freqs).unwrap();
        assert_eq!((f.width(), f.pad_columns()), (1077, 0));
        assert_eq!(f.get(1, 1076), -((1100 + 1076) as f64) - 1.0);
    }

    #[test]
    fn pgm_layout() {
        let m = TimeFreqMatrix {
            rows: 2,
            cols: 2,
            values: vec![0.0, 1.0, 2.0, 3.0],
            column_times_s: vec![0.0, 0.1],
        };
        let f = pad_to_width(m, 3, FeatureKind::PitchSyncSff, &[100.0, 200.0]).unwrap();
        let pgm = f.to_pgm();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        // top row is the 200 Hz bin
        assert_eq!(&pgm[header.len()..], &[170, 255, 0, 0, 85, 0]);
        let csv = f.to_csv();
        assert!(csv.starts_with("bin_hz,0,0.1,0.1\n100,0,1,0\n"));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in FeatureKind::ALL {
            assert_eq!(k.name().parse::<FeatureKind>().unwrap(), k);
            assert_eq!(FeatureKind::from_code(k.code()), Some(k));
        }
        assert!("mel".parse::<FeatureKind>().is_err());
    }

    proptest! {
        #[test]
        fn columns_stay_within_averaged_range(seed in any::<u64>(), n in 20usize..400) {
            let env = random_env(2, n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let mut locs: Vec<usize> = (0..8).map(|_| rng.gen_range(0..n)).collect();
            locs.sort_unstable();
            locs.dedup();
            prop_assume!(locs.len() >= 2);
            let g = GciSequence::new(locs.clone(), 16000).unwrap();
            let m = pitch_sync_subsample(&env, &g, GciAveraging::HalfOpen).unwrap();
            prop_assert_eq!(m.cols, locs.len() - 1);
            for k in 0..2 {
                for l in 0..m.cols {
                    let seg = &env.row(k)[locs[l]..locs[l + 1]];
                    let lo = seg.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(m.get(k, l) >= lo - 1e-12 && m.get(k, l) <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn log_is_monotone(a in 0.0f64..1e3, b in 0.0f64..1e3) {
            let m = TimeFreqMatrix { rows: 1, cols: 2, values: vec![a, b], column_times_s: vec![0.0, 1.0] };
            let l = log_compress(m, DEFAULT_LOG_FLOOR).unwrap();
            if a <= b {
                prop_assert!(l.values[0] <= l.values[1]);
            } else {
                prop_assert!(l.values[0] >= l.values[1]);
            }
        }
    }
}
