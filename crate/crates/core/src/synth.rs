//! Deterministic synthetic signals for tests, benchmarks and demos.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::signal::SampledSignal;

/// Formant (centre Hz, bandwidth Hz) pairs of an /a/-like vowel.
pub const DEFAULT_FORMANTS: [(f64, f64); 3] = [(700.0, 90.0), (1220.0, 110.0), (2600.0, 160.0)];

fn num_samples(fs: u32, seconds: f64) -> usize {
    (seconds * fs as f64).round().max(1.0) as usize
}

pub fn tone(fs: u32, freq_hz: f64, amplitude: f64, seconds: f64) -> SampledSignal {
    let n = num_samples(fs, seconds);
    let samples = (0..n)
        .map(|i| amplitude * (2.0 * PI * freq_hz * i as f64 / fs as f64).sin())
        .collect();
    SampledSignal::new(samples, fs).expect("finite tone")
}

/// Unit impulses every `fs / f0` samples, first one at `offset_s`.
pub fn impulse_train(fs: u32, f0_hz: f64, seconds: f64, offset_s: f64) -> SampledSignal {
    let n = num_samples(fs, seconds);
    let mut samples = vec![0.0; n];
    for t in excitation_instants(fs, f0_hz, n, offset_s) {
        samples[t] = 1.0;
    }
    SampledSignal::new(samples, fs).expect("finite impulses")
}

pub fn white_noise(fs: u32, seconds: f64, amplitude: f64, seed: u64) -> SampledSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..num_samples(fs, seconds))
        .map(|_| amplitude * rng.gen_range(-1.0..1.0))
        .collect();
    SampledSignal::new(samples, fs).expect("finite noise")
}

/// Linear chirp from `f_start` to `f_end`.
pub fn chirp(fs: u32, f_start: f64, f_end: f64, amplitude: f64, seconds: f64) -> SampledSignal {
    let n = num_samples(fs, seconds);
    let rate = (f_end - f_start) / seconds;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / fs as f64;
            amplitude * (2.0 * PI * (f_start * t + 0.5 * rate * t * t)).sin()
        })
        .collect();
    SampledSignal::new(samples, fs).expect("finite chirp")
}

pub fn excitation_instants(fs: u32, f0_hz: f64, n: usize, offset_s: f64) -> Vec<usize> {
    let period = fs as f64 / f0_hz;
    let start = offset_s * fs as f64;
    (0..)
        .map(|i| (start + i as f64 * period).round() as usize)
        .take_while(|&t| t < n)
        .collect()
}

/// Runs `x` through a cascade of two-pole resonators.
pub fn resonate(x: &mut [f64], fs: u32, formants: &[(f64, f64)]) {
    for &(centre, bandwidth) in formants {
        let radius = (-PI * bandwidth / fs as f64).exp();
        let a1 = 2.0 * radius * (2.0 * PI * centre / fs as f64).cos();
        let a2 = -radius * radius;
        let (mut y1, mut y2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = *v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

/// Negative impulse train at `f0` (the sharp negative peak of the
/// differentiated glottal flow at closure) through [`DEFAULT_FORMANTS`],
/// peak-normalized to 0.5. Also returns the excitation instants.
pub fn vowel(fs: u32, f0_hz: f64, seconds: f64) -> (SampledSignal, Vec<usize>) {
    vowel_with(fs, f0_hz, seconds, &DEFAULT_FORMANTS, 0.0, 0)
}

/// Like [`vowel`] with explicit formants and an optional noise floor
/// (relative to the 0.5 peak).
pub fn vowel_with(
    fs: u32,
    f0_hz: f64,
    seconds: f64,
    formants: &[(f64, f64)],
    noise: f64,
    seed: u64,
) -> (SampledSignal, Vec<usize>) {
    let n = num_samples(fs, seconds);
    let truth = excitation_instants(fs, f0_hz, n, 0.5 / f0_hz);
    let mut x = vec![0.0; n];
    for &t in &truth {
        x[t] = -1.0;
    }
    resonate(&mut x, fs, formants);
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in x.iter_mut() {
        *v = 0.5 * *v / peak
            + if noise > 0.0 {
                0.5 * noise * rng.gen_range(-1.0..1.0)
            } else {
                0.0
            };
    }
    (SampledSignal::new(x, fs).expect("finite vowel"), truth)
}
