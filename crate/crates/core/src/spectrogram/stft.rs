use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::{frame_bounds, TimeFreqMatrix};
use crate::error::{Error, Result};
use crate::signal::SampledSignal;

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// DFT size; `None` picks `f_s / 20 Hz` (800 at 16 kHz).
    pub dft_length: Option<usize>,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_ms: 40.0,
            hop_ms: 10.0,
            dft_length: None,
            band_lo_hz: 0.0,
            band_hi_hz: 4000.0,
        }
    }
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi n / (L - 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Hamming-windowed DFT magnitudes (not power), keeping bins with
/// `band_lo < f <= band_hi`. Returns the matrix and the kept bin
/// frequencies. Signals shorter than one frame yield one zero-padded frame.
pub fn stft_spectrogram(
    signal: &SampledSignal,
    config: &StftConfig,
) -> Result<(TimeFreqMatrix, Vec<f64>)> {
    let fs = signal.sample_rate_hz() as f64;
    if !(config.hop_ms > 0.0) {
        return Err(Error::Config(format!(
            "STFT hop {} ms must be positive",
            config.hop_ms
        )));
    }
    if !(config.frame_ms > 0.0) {
        return Err(Error::Config(format!(
            "STFT frame {} ms must be positive",
            config.frame_ms
        )));
    }
    let frame = ((config.frame_ms * fs / 1000.0).round() as usize).max(1);
    let hop = ((config.hop_ms * fs / 1000.0).round() as usize).max(1);
    let dft = config
        .dft_length
        .unwrap_or_else(|| (fs / 20.0).round() as usize);
    if dft < frame {
        return Err(Error::Config(format!(
            "DFT length {dft} shorter than the {frame}-sample frame"
        )));
    }
    let bins: Vec<usize> = (0..=dft / 2)
        .filter(|&k| {
            let f = k as f64 * fs / dft as f64;
            f > config.band_lo_hz && f <= config.band_hi_hz
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::Config("no DFT bins inside the analysis band".into()));
    }
    let freqs: Vec<f64> = bins.iter().map(|&k| k as f64 * fs / dft as f64).collect();

    let window = hamming(frame);
    let fft = FftPlanner::new().plan_fft_forward(dft);
    let x = signal.samples();
    let n = x.len();
    let starts: Vec<usize> = if n < frame {
        vec![0]
    } else {
        frame_bounds(n, frame, hop)
            .into_iter()
            .filter(|(a, b)| b - a == frame)
            .map(|(a, _)| a)
            .collect()
    };

    let rows = bins.len();
    let cols = starts.len();
    let mut values = vec![0.0; rows * cols];
    let mut buf = vec![Complex::new(0.0, 0.0); dft];
    let mut column_times_s = Vec::with_capacity(cols);
    for (c, &start) in starts.iter().enumerate() {
        buf.fill(Complex::new(0.0, 0.0));
        for (i, w) in window.iter().enumerate() {
            if let Some(&v) = x.get(start + i) {
                buf[i] = Complex::new(v * w, 0.0);
            }
        }
        fft.process(&mut buf);
        for (r, &k) in bins.iter().enumerate() {
            values[r * cols + c] = buf[k].norm();
        }
        column_times_s.push((start as f64 + 0.5 * frame as f64) / fs);
    }
    Ok((
        TimeFreqMatrix {
            rows,
            cols,
            values,
            column_times_s,
        },
        freqs,
    ))
}
