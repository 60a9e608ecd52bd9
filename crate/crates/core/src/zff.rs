//! Glottal closure instant detection by zero frequency filtering.
//!
//! The pre-emphasized signal is integrated by a resonator with a double pole
//! at DC (`z0[n] = 2 z0[n-1] - z0[n-2] + p[n]`), the resulting polynomial
//! trend is removed by subtracting a local mean over roughly one and a half
//! pitch periods, and the positive zero crossings of what remains are the
//! GCIs.

use crate::error::{Error, Result};
use crate::signal::{first_difference, SampledSignal};

/// Trend window length as a multiple of the estimated pitch period.
pub const TREND_WINDOW_PITCH_RATIO: f64 = 1.5;
/// Pitch estimate used when the autocorrelation peak is too weak.
pub const FALLBACK_PITCH_MS: f64 = 10.0;
pub const MIN_PITCH_MS: f64 = 2.0;
pub const MAX_PITCH_MS: f64 = 15.0;
pub const MIN_PITCH_SIGNAL_MS: f64 = 100.0;
const PITCH_FRAME_MS: f64 = 40.0;
const PITCH_HOP_MS: f64 = 20.0;
const VOICED_ENERGY_RATIO: f64 = 0.1;
const MIN_PEAK_CORRELATION: f64 = 0.3;
/// Crossings closer than this to the previously kept one are dropped.
pub const MIN_GCI_SPACING_MS: f64 = 1.0;
/// The sliding window sum is recomputed from scratch at this stride.
const TREND_RESUM_STRIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrendWindow {
    /// 1.5 times the pitch period estimated from the signal itself.
    AutoPitch,
    /// Fixed window length in milliseconds, within [2, 50].
    FixedMs(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZffConfig {
    pub trend_window: TrendWindow,
    pub trend_passes: usize,
    pub resonator_passes: usize,
}

impl Default for ZffConfig {
    fn default() -> Self {
        Self {
            trend_window: TrendWindow::AutoPitch,
            trend_passes: 2,
            resonator_passes: 2,
        }
    }
}

impl ZffConfig {
    pub fn validate(&self) -> Result<()> {
        if let TrendWindow::FixedMs(ms) = self.trend_window {
            if !(2.0..=50.0).contains(&ms) {
                return Err(Error::Config(format!(
                    "fixed trend window {ms} ms outside [2, 50] ms"
                )));
            }
        }
        if self.trend_passes == 0 || self.resonator_passes == 0 {
            return Err(Error::Config("ZFF pass counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Strictly increasing GCI sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GciSequence {
    locations: Vec<usize>,
    sample_rate_hz: u32,
}

impl GciSequence {
    pub fn new(locations: Vec<usize>, sample_rate_hz: u32) -> Result<Self> {
        if locations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "GCI locations must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            locations,
            sample_rate_hz,
        })
    }

    pub fn locations(&self) -> &[usize] {
        &self.locations
    }
    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }
    pub fn len(&self) -> usize {
        self.locations.len()
    }
    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// GCIs inside `[start, end)`, re-indexed relative to `start`.
    pub fn window(&self, start: usize, end: usize) -> GciSequence {
        GciSequence {
            locations: self
                .locations
                .iter()
                .filter(|&&l| l >= start && l < end)
                .map(|&l| l - start)
                .collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Median spacing between consecutive GCIs in seconds.
    pub fn median_interval_s(&self) -> Option<f64> {
        if self.locations.len() < 2 {
            return None;
        }
        let mut d: Vec<usize> = self.locations.windows(2).map(|w| w[1] - w[0]).collect();
        d.sort_unstable();
        let mid = d.len() / 2;
        let med = if d.len() % 2 == 1 {
            d[mid] as f64
        } else {
            (d[mid - 1] + d[mid]) as f64 / 2.0
        };
        Some(med / self.sample_rate_hz as f64)
    }

    /// One location per line, as sample indices or as seconds with six decimals.
    pub fn to_text(&self, seconds: bool) -> String {
        let fs = self.sample_rate_hz as f64;
        let mut out = String::with_capacity(self.locations.len() * 8);
        for &l in &self.locations {
            if seconds {
                out.push_str(&format!("{:.6}\n", l as f64 / fs));
            } else {
                out.push_str(&format!("{l}\n"));
            }
        }
        out
    }
}

/// Cascade of `passes` zero frequency resonators with zero initial state.
pub fn zero_freq_resonate(p: &[f64], passes: usize) -> Vec<f64> {
    let mut x = p.to_vec();
    for _ in 0..passes {
        let (mut z1, mut z2) = (0.0f64, 0.0f64);
        for v in x.iter_mut() {
            let z = 2.0 * z1 - z2 + *v;
            z2 = z1;
            z1 = z;
            *v = z;
        }
    }
    x
}

/// Subtracts the mean over `[n-M, n+M]` from every sample. Near the edges
/// the window is truncated to the samples that exist.
pub fn remove_trend(z0: &[f64], half_window: usize) -> Result<Vec<f64>> {
    if half_window == 0 {
        return Err(Error::Config("trend half window must be positive".into()));
    }
    let n = z0.len();
    if 2 * half_window + 1 > n {
        return Err(Error::InsufficientData(format!(
            "trend window of {} samples exceeds signal of {n}",
            2 * half_window + 1
        )));
    }
    let bounds = |i: usize| (i.saturating_sub(half_window), (i + half_window).min(n - 1));
    let mut out = Vec::with_capacity(n);
    let (mut lo, mut hi) = bounds(0);
    let mut sum: f64 = z0[lo..=hi].iter().sum();
    for i in 0..n {
        let (new_lo, new_hi) = bounds(i);
        if i % TREND_RESUM_STRIDE == 0 {
            sum = z0[new_lo..=new_hi].iter().sum();
        } else {
            if new_hi > hi {
                sum += z0[new_hi];
            }
            if new_lo > lo {
                sum -= z0[lo];
            }
        }
        lo = new_lo;
        hi = new_hi;
        out.push(z0[i] - sum / (hi - lo + 1) as f64);
    }
    Ok(out)
}

/// Average pitch period in samples from the energy-weighted normalized
/// autocorrelation of the louder frames. Returns the 10 ms fallback when no
/// lag in [2, 15] ms correlates above 0.3.
pub fn estimate_pitch_period(signal: &SampledSignal) -> Result<usize> {
    let fs = signal.sample_rate_hz() as f64;
    let x = signal.samples();
    let ms = |v: f64| (v * fs / 1000.0).round() as usize;
    if (x.len() as f64) < MIN_PITCH_SIGNAL_MS * fs / 1000.0 {
        return Err(Error::InsufficientData(format!(
            "pitch estimation needs {MIN_PITCH_SIGNAL_MS} ms, got {:.1} ms",
            1000.0 * x.len() as f64 / fs
        )));
    }
    let fallback = ms(FALLBACK_PITCH_MS).max(1);
    let frame = ms(PITCH_FRAME_MS);
    let hop = ms(PITCH_HOP_MS).max(1);
    let min_lag = ms(MIN_PITCH_MS).max(1);
    let max_lag = ms(MAX_PITCH_MS).min(frame.saturating_sub(2));
    if frame < 4 || max_lag <= min_lag {
        return Ok(fallback);
    }

    let frames: Vec<Vec<f64>> = (0..)
        .map(|i| i * hop)
        .take_while(|&s| s + frame <= x.len())
        .map(|s| {
            let f = &x[s..s + frame];
            let mean = f.iter().sum::<f64>() / frame as f64;
            f.iter().map(|v| v - mean).collect()
        })
        .collect();
    let energy: Vec<f64> = frames
        .iter()
        .map(|f| f.iter().map(|v| v * v).sum())
        .collect();
    let peak_energy = energy.iter().cloned().fold(0.0, f64::max);
    if peak_energy <= 0.0 {
        return Ok(fallback);
    }

    // acf[lag] accumulates sum_i E_i * r_i(lag) / r_i(0) over voiced frames
    let mut acf = vec![0.0; max_lag + 2];
    let mut weight = 0.0;
    for (f, &e) in frames.iter().zip(&energy) {
        if e < VOICED_ENERGY_RATIO * peak_energy {
            continue;
        }
        for (lag, slot) in acf.iter_mut().enumerate().skip(min_lag - 1) {
            let r: f64 = f[..frame - lag]
                .iter()
                .zip(&f[lag..])
                .map(|(a, b)| a * b)
                .sum();
            *slot += r; // r / e * e
        }
        weight += e;
    }
    let acf: Vec<f64> = acf.iter().map(|v| v / weight).collect();

    let mut best: Option<(usize, f64)> = None;
    for lag in min_lag..=max_lag {
        let v = acf[lag];
        let is_peak = v >= acf[lag - 1] && v >= acf[lag + 1];
        if is_peak && best.is_none_or(|(_, b)| v > b) {
            best = Some((lag, v));
        }
    }
    Ok(match best {
        Some((lag, v)) if v >= MIN_PEAK_CORRELATION => lag,
        _ => fallback,
    })
}

/// Indices `n` with `z[n-1] < 0 <= z[n]`, dropping any crossing within 1 ms
/// of the previously kept one.
pub fn pick_positive_zero_crossings(z: &[f64], sample_rate_hz: u32) -> GciSequence {
    let min_gap = MIN_GCI_SPACING_MS * sample_rate_hz as f64 / 1000.0;
    let mut locations: Vec<usize> = Vec::new();
    for n in 1..z.len() {
        if z[n - 1] < 0.0 && z[n] >= 0.0 {
            if let Some(&last) = locations.last() {
                if ((n - last) as f64) < min_gap {
                    continue;
                }
            }
            locations.push(n);
        }
    }
    GciSequence {
        locations,
        sample_rate_hz,
    }
}

/// Half window `M` such that `2M + 1` spans `window_samples`.
fn half_window_for(window_samples: f64) -> usize {
    ((window_samples - 1.0) / 2.0).round().max(1.0) as usize
}

pub fn trend_half_window(signal: &SampledSignal, config: &ZffConfig) -> Result<usize> {
    let fs = signal.sample_rate_hz() as f64;
    Ok(match config.trend_window {
        TrendWindow::AutoPitch => {
            let period = estimate_pitch_period(signal)?;
            half_window_for(TREND_WINDOW_PITCH_RATIO * period as f64)
        }
        TrendWindow::FixedMs(ms) => half_window_for(ms * fs / 1000.0),
    })
}

/// The ZFF signal: pre-emphasis, resonator cascade, repeated trend removal.
pub fn zff_signal(signal: &SampledSignal, config: &ZffConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let half = trend_half_window(signal, config)?;
    let p = first_difference(signal.samples());
    let mut z = zero_freq_resonate(&p, config.resonator_passes);
    for _ in 0..config.trend_passes {
        z = remove_trend(&z, half)?;
    }
    Ok(z)
}

pub fn detect_gci(signal: &SampledSignal, config: &ZffConfig) -> Result<GciSequence> {
    let z = zff_signal(signal, config)?;
    Ok(pick_positive_zero_crossings(&z, signal.sample_rate_hz()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binomial(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn resonator_impulse_responses() {
        let mut imp = vec![0.0; 8];
        imp[0] = 1.0;
        assert_eq!(
            zero_freq_resonate(&imp, 1),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
        );
        assert!(zero_freq_resonate(&[0.0; 16], 2).iter().all(|&v| v == 0.0));

        // iterated cumulative summation: four sums of an impulse
        let mut want = imp.clone();
        for _ in 0..4 {
            let mut acc = 0.0;
            for v in want.iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        let got = zero_freq_resonate(&imp, 2);
        assert_eq!(got, want);
        for (n, v) in got.iter().enumerate() {
            assert_eq!(*v, binomial(n as u64 + 3, 3));
        }
        assert_eq!(&got[..4], &[1.0, 4.0, 10.0, 20.0]);
    }

    fn windowed_mean_oracle(z: &[f64], m: usize) -> Vec<f64> {
        (0..z.len())
            .map(|i| {
                let lo = i.saturating_sub(m);
                let hi = (i + m).min(z.len() - 1);
                let mut s = 0.0;
                for v in &z[lo..=hi] {
                    s += v;
                }
                z[i] - s / (hi - lo + 1) as f64
            })
            .collect()
    }

    #[test]
    fn trend_removal_examples() {
        let c = vec![3.5; 50];
        assert!(remove_trend(&c, 4).unwrap().iter().all(|v| v.abs() < 1e-12));

        let ramp: Vec<f64> = (0..200).map(|i| 0.25 * i as f64 - 7.0).collect();
        let out = remove_trend(&ramp, 10).unwrap();
        for v in &out[10..190] {
            assert!(v.abs() < 1e-10);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z: Vec<f64> = (0..1000).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let got = remove_trend(&z, 37).unwrap();
        for (a, b) in got.iter().zip(windowed_mean_oracle(&z, 37)) {
            assert!((a - b).abs() < 1e-10);
        }

        assert!(matches!(remove_trend(&z, 0), Err(Error::Config(_))));
        assert!(matches!(
            remove_trend(&z[..5], 3),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn pitch_of_impulse_train() {
        let s = synth::impulse_train(16000, 100.0, 1.0, 0.0);
        let p = estimate_pitch_period(&s).unwrap();
        assert!((p as i64 - 160).abs() <= 2, "{p}");
    }

    #[test]
    fn pitch_of_sinusoid() {
        let s = synth::tone(16000, 200.0, 0.5, 1.0);
        let p = estimate_pitch_period(&s).unwrap();
        assert!((p as i64 - 80).abs() <= 1, "{p}");
    }

    #[test]
    fn pitch_of_noise_falls_back() {
        let s = synth::white_noise(16000, 1.0, 0.5, 3);
        assert_eq!(estimate_pitch_period(&s).unwrap(), 160);
    }

    #[test]
    fn pitch_needs_100ms() {
        let s = synth::tone(16000, 200.0, 0.5, 0.05);
        assert!(matches!(
            estimate_pitch_period(&s),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn picker_on_sine() {
        let z: Vec<f64> = (0..16000)
            .map(|n| (2.0 * std::f64::consts::PI * 100.0 * (n as f64 + 0.5) / 16000.0).sin())
            .collect();
        let g = pick_positive_zero_crossings(&z, 16000);
        assert!(g.len() >= 99);
        for w in g.locations().windows(2) {
            assert_eq!(w[1] - w[0], 160);
        }
    }

    #[test]
    fn picker_on_negative_signal() {
        assert!(pick_positive_zero_crossings(&[-1.0; 100], 16000).is_empty());
    }

    #[test]
    fn picker_merges_chatter() {
        let mut z = vec![-1.0; 100];
        z[10] = 1.0; // crossing at 10
        z[14] = 1.0; // crossing at 14, inside 1 ms at 16 kHz
        z[40] = 1.0;
        let g = pick_positive_zero_crossings(&z, 16000);
        assert_eq!(g.locations(), &[10, 40]);
    }

    #[test]
    fn config_validation() {
        let mut c = ZffConfig {
            trend_window: TrendWindow::FixedMs(60.0),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.trend_window = TrendWindow::FixedMs(15.0);
        assert!(c.validate().is_ok());
        c.trend_passes = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn text_export() {
        let g = GciSequence::new(vec![0, 160, 16000], 16000).unwrap();
        assert_eq!(g.to_text(false), "0\n160\n16000\n");
        assert_eq!(g.to_text(true), "0.000000\n0.010000\n1.000000\n");
        assert!(GciSequence::new(vec![3, 3], 16000).is_err());
    }

    #[test]
    fn vowel_gcis_found() {
        let (s, truth) = synth::vowel(16000, 120.0, 1.0);
        let g = detect_gci(&s, &ZffConfig::default()).unwrap();
        let tol = 4; // 0.25 ms
        let hits = truth
            .iter()
            .filter(|&&t| g.locations().iter().any(|&l| l.abs_diff(t) <= tol))
            .count();
        assert!(
            hits as f64 >= 0.95 * truth.len() as f64,
            "{hits}/{}",
            truth.len()
        );
        assert!(g.len().abs_diff(truth.len()) <= 2, "{} detections", g.len());
        let med = g.median_interval_s().unwrap();
        assert!((med * 120.0 - 1.0).abs() < 0.05, "{med}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn affine_sequences_vanish_inside(a in -10.0f64..10.0, b in -10.0f64..10.0, m in 1usize..40) {
            let z: Vec<f64> = (0..400).map(|i| a + b * i as f64).collect();
            let out = remove_trend(&z, m).unwrap();
            for v in &out[m..400 - m] {
                prop_assert!(v.abs() < 1e-10);
            }
        }

        #[test]
        fn gcis_spaced_and_scale_invariant(f0 in 80.0f64..250.0, gain in 0.01f64..20.0) {
            let (s, _) = synth::vowel(16000, f0, 0.4);
            let cfg = ZffConfig::default();
            let g = detect_gci(&s, &cfg).unwrap();
            for w in g.locations().windows(2) {
                prop_assert!(w[1] - w[0] >= 16);
            }
            let scaled = detect_gci(&s.scaled(gain).unwrap(), &cfg).unwrap();
            prop_assert_eq!(g, scaled);
        }

        #[test]
        fn shift_equivariant(m in 1usize..400) {
            let (s, _) = synth::vowel(16000, 130.0, 0.5);
            let cfg = ZffConfig { trend_window: TrendWindow::FixedMs(11.0), ..Default::default() };
            let g = detect_gci(&s, &cfg).unwrap();
            let mut padded = vec![0.0; m];
            padded.extend_from_slice(s.samples());
            let gp = detect_gci(&SampledSignal::new(padded, 16000).unwrap(), &cfg).unwrap();
            let edge = 2 * 88 + m;
            let a: Vec<usize> = g.locations().iter().map(|l| l + m).filter(|&l| l > edge && l + edge < s.len()).collect();
            let b: Vec<usize> = gp.locations().iter().copied().filter(|&l| l > edge && l + edge < s.len()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
