//! Single frequency filtering.
//!
//! Each analysis frequency `f_k` is shifted to `f_s/2` by multiplying the
//! pre-emphasized signal with `exp(j * w_k * n)`, `w_k = 2*pi*(f_s/2 - f_k)/f_s`,
//! and the result is filtered by the single real pole `H(z) = 1 / (1 + r z^-1)`
//! sitting at `f_s/2`. The envelope is the magnitude of the complex output.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::SampledSignal;

pub const DEFAULT_POLE_RADIUS: f64 = 0.9394;
pub const DEFAULT_SPACING_HZ: f64 = 20.0;
pub const DEFAULT_BAND_LO_HZ: f64 = 0.0;
pub const DEFAULT_BAND_HI_HZ: f64 = 4000.0;

/// Oscillator phase is recomputed exactly every this many samples to keep
/// rotation round-off from accumulating.
const PHASOR_RESEED: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    sample_rate_hz: u32,
    spacing_hz: f64,
    band_lo_hz: f64,
    band_hi_hz: f64,
    pole_radius: f64,
    bin_freqs_hz: Vec<f64>,
}

impl FilterBank {
    /// Bins are `band_lo + k * spacing` for `k = 1..=K`, so the last bin sits
    /// on `band_hi` and DC is never a bin.
    pub fn new(
        sample_rate_hz: u32,
        band_lo_hz: f64,
        band_hi_hz: f64,
        spacing_hz: f64,
        pole_radius: f64,
    ) -> Result<Self> {
        if !(pole_radius > 0.0 && pole_radius < 1.0) {
            return Err(Error::Stability(pole_radius));
        }
        if sample_rate_hz == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        if !(band_lo_hz >= 0.0 && band_lo_hz < band_hi_hz && band_hi_hz <= nyquist) {
            return Err(Error::Config(format!(
                "band [{band_lo_hz}, {band_hi_hz}] Hz must satisfy 0 <= lo < hi <= {nyquist}"
            )));
        }
        if !(spacing_hz > 0.0) {
            return Err(Error::Config(format!(
                "spacing {spacing_hz} Hz must be positive"
            )));
        }
        let ratio = (band_hi_hz - band_lo_hz) / spacing_hz;
        let bins = ratio.round();
        if (ratio - bins).abs() > 1e-9 * ratio.max(1.0) || bins < 1.0 {
            return Err(Error::Config(format!(
                "band width {} Hz is not a multiple of the {spacing_hz} Hz spacing",
                band_hi_hz - band_lo_hz
            )));
        }
        let bin_freqs_hz = (1..=bins as usize)
            .map(|k| band_lo_hz + k as f64 * spacing_hz)
            .collect();
        Ok(Self {
            sample_rate_hz,
            spacing_hz,
            band_lo_hz,
            band_hi_hz,
            pole_radius,
            bin_freqs_hz,
        })
    }

    /// 0 to 4 kHz in 20 Hz steps with `r = 0.9394`.
    pub fn speech_default(sample_rate_hz: u32) -> Result<Self> {
        Self::new(
            sample_rate_hz,
            DEFAULT_BAND_LO_HZ,
            DEFAULT_BAND_HI_HZ,
            DEFAULT_SPACING_HZ,
            DEFAULT_POLE_RADIUS,
        )
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }
    pub fn spacing_hz(&self) -> f64 {
        self.spacing_hz
    }
    pub fn band_hz(&self) -> (f64, f64) {
        (self.band_lo_hz, self.band_hi_hz)
    }
    pub fn pole_radius(&self) -> f64 {
        self.pole_radius
    }
    pub fn bin_freqs_hz(&self) -> &[f64] {
        &self.bin_freqs_hz
    }
    pub fn num_bins(&self) -> usize {
        self.bin_freqs_hz.len()
    }

    /// Shifted normalized frequency `2*pi*(f_s/2 - f_k)/f_s` of bin `k`.
    pub fn shifted_omega(&self, k: usize) -> f64 {
        let fs = self.sample_rate_hz as f64;
        2.0 * std::f64::consts::PI * (fs / 2.0 - self.bin_freqs_hz[k]) / fs
    }
}

/// K x N envelope, row-major by bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SffEnvelope {
    values: Vec<f64>,
    filterbank: FilterBank,
    n_samples: usize,
}

impl SffEnvelope {
    pub fn num_bins(&self) -> usize {
        self.filterbank.num_bins()
    }
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
    pub fn filterbank(&self) -> &FilterBank {
        &self.filterbank
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_samples..(k + 1) * self.n_samples]
    }
    pub fn get(&self, k: usize, n: usize) -> f64 {
        self.values[k * self.n_samples + n]
    }

    /// Builds an envelope from raw values, mostly useful in tests and for
    /// subsampling precomputed data.
    pub fn from_values(values: Vec<f64>, filterbank: FilterBank, n_samples: usize) -> Result<Self> {
        if values.len() != filterbank.num_bins() * n_samples || n_samples == 0 {
            return Err(Error::Config(format!(
                "{} values do not form a {} x {n_samples} envelope",
                values.len(),
                filterbank.num_bins()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(
                "envelope entries must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            values,
            filterbank,
            n_samples,
        })
    }
}

/// Runs the filter bank over an already pre-emphasized signal.
pub fn sff_envelope(pre_emphasized: &SampledSignal, bank: &FilterBank) -> Result<SffEnvelope> {
    if pre_emphasized.sample_rate_hz() != bank.sample_rate_hz() {
        return Err(Error::Config(format!(
            "signal at {} Hz, filter bank at {} Hz",
            pre_emphasized.sample_rate_hz(),
            bank.sample_rate_hz()
        )));
    }
    let p = pre_emphasized.samples();
    let n = p.len();
    let mut values = vec![0.0; bank.num_bins() * n];
    values
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(k, row)| filter_bin(p, bank.shifted_omega(k), bank.pole_radius(), row));
    Ok(SffEnvelope {
        values,
        filterbank: bank.clone(),
        n_samples: n,
    })
}

/// One bin: `y[n] = -r y[n-1] + p[n] exp(j w n)`, `y[-1] = 0`, `out[n] = |y[n]|`.
fn filter_bin(p: &[f64], omega: f64, r: f64, out: &mut [f64]) {
    let (step_im, step_re) = omega.sin_cos();
    let (mut yr, mut yi) = (0.0f64, 0.0f64);
    let (mut cr, mut ci) = (1.0f64, 0.0f64);
    for (n, (&x, e)) in p.iter().zip(out.iter_mut()).enumerate() {
        if n % PHASOR_RESEED == 0 {
            let (s, c) = (omega * n as f64).sin_cos();
            cr = c;
            ci = s;
        }
        yr = -r * yr + x * cr;
        yi = -r * yi + x * ci;
        *e = yr.hypot(yi);
        let nr = cr * step_re - ci * step_im;
        ci = cr * step_im + ci * step_re;
        cr = nr;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct summation of the unrolled recursion,
    /// `|sum_{m<=n} (-r)^(n-m) p[m] exp(j w m)|`.
    fn brute_force(p: &[f64], omega: f64, r: f64, n: usize) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (m, &pm) in p.iter().enumerate().take(n + 1) {
            let g = (-r).powi((n - m) as i32) * pm;
            let ph = omega * m as f64;
            re += g * ph.cos();
            im += g * ph.sin();
        }
        re.hypot(im)
    }

    #[test]
    fn bank_sizes() {
        assert_eq!(
            FilterBank::new(16000, 0.0, 4000.0, 20.0, 0.9394)
                .unwrap()
                .num_bins(),
            200
        );
        assert_eq!(
            FilterBank::new(16000, 0.0, 8000.0, 20.0, 0.9394)
                .unwrap()
                .num_bins(),
            400
        );
        let one = FilterBank::new(8000, 0.0, 4000.0, 4000.0, 0.5).unwrap();
        assert_eq!(one.bin_freqs_hz(), &[4000.0]);
        let b = FilterBank::speech_default(16000).unwrap();
        assert_eq!(b.bin_freqs_hz()[0], 20.0);
        assert_eq!(*b.bin_freqs_hz().last().unwrap(), 4000.0);
    }

    #[test]
    fn bank_errors() {
        assert!(matches!(
            FilterBank::new(16000, 0.0, 4000.0, 30.0, 0.9),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            FilterBank::new(16000, 0.0, 4000.0, 20.0, 1.0),
            Err(Error::Stability(_))
        ));
        assert!(matches!(
            FilterBank::new(16000, 0.0, 4000.0, 20.0, 0.0),
            Err(Error::Stability(_))
        ));
        assert!(FilterBank::new(16000, 0.0, 9000.0, 20.0, 0.9).is_err());
        assert!(FilterBank::new(16000, 100.0, 100.0, 20.0, 0.9).is_err());
    }

    #[test]
    fn zero_signal_zero_envelope() {
        let bank = FilterBank::speech_default(16000).unwrap();
        let s = SampledSignal::new(vec![0.0; 400], 16000).unwrap();
        let e = sff_envelope(&s, &bank).unwrap();
        assert_eq!(e.values().len(), 200 * 400);
        assert!(e.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rate_mismatch() {
        let bank = FilterBank::speech_default(16000).unwrap();
        let s = SampledSignal::new(vec![0.0; 10], 8000).unwrap();
        assert!(matches!(sff_envelope(&s, &bank), Err(Error::Config(_))));
    }

    #[test]
    fn matches_unrolled_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p: Vec<f64> = (0..700).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bank = FilterBank::new(16000, 0.0, 8000.0, 400.0, 0.9394).unwrap();
        let e = sff_envelope(&SampledSignal::new(p.clone(), 16000).unwrap(), &bank).unwrap();
        for k in 0..bank.num_bins() {
            for n in (0..700).step_by(37) {
                let want = brute_force(&p, bank.shifted_omega(k), 0.9394, n);
                let got = e.get(k, n);
                assert!((got - want).abs() <= 1e-9 * want.max(1e-12), "k={k} n={n}");
            }
        }
    }

    #[test]
    fn tone_at_bin_settles_to_oracle() {
        let fs = 16000;
        let r = 0.9394;
        let bank = FilterBank::new(fs, 0.0, 4000.0, 20.0, r).unwrap();
        let k = 49; // 1000 Hz
        let f = bank.bin_freqs_hz()[k];
        let a = 0.3;
        let n = 600;
        let p: Vec<f64> = (0..n)
            .map(|i| a * (2.0 * std::f64::consts::PI * f * i as f64 / fs as f64).cos())
            .collect();
        let e = sff_envelope(&SampledSignal::new(p.clone(), fs).unwrap(), &bank).unwrap();
        let transient = (5.0 / (1.0 - r)).ceil() as usize;
        for i in transient..n {
            let want = brute_force(&p, bank.shifted_omega(k), r, i);
            assert!((e.get(k, i) - want).abs() <= 1e-9 * want);
        }
        // the brute force itself sits near the closed form a / (2 (1 - r))
        let steady = brute_force(&p, bank.shifted_omega(k), r, n - 1);
        assert!((steady / (a / (2.0 * (1.0 - r))) - 1.0).abs() < 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn homogeneous_nonnegative_bounded(
            p in prop::collection::vec(-1.0f64..1.0, 1..300),
            alpha in -5.0f64..5.0,
        ) {
            let bank = FilterBank::new(8000, 0.0, 4000.0, 500.0, 0.9).unwrap();
            let s = SampledSignal::new(p.clone(), 8000).unwrap();
            let e = sff_envelope(&s, &bank).unwrap();
            let es = sff_envelope(&s.scaled(alpha).unwrap(), &bank).unwrap();
            let bound = p.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (1.0 - 0.9);
            let peak = e.values().iter().fold(0.0f64, |m, v| m.max(*v));
            for (a, b) in e.values().iter().zip(es.values()) {
                prop_assert!(*a >= 0.0);
                prop_assert!(*a <= bound * (1.0 + 1e-12));
                // relative to the envelope peak: near-cancelled entries carry
                // round-off from terms much larger than themselves
                prop_assert!((b - alpha.abs() * a).abs() <= 1e-12 * alpha.abs() * peak);
            }
        }

        #[test]
        fn appending_samples_keeps_prefix(
            p in prop::collection::vec(-1.0f64..1.0, 1..600),
            extra in prop::collection::vec(-1.0f64..1.0, 1..100),
        ) {
            let bank = FilterBank::new(8000, 0.0, 4000.0, 1000.0, 0.95).unwrap();
            let short = sff_envelope(&SampledSignal::new(p.clone(), 8000).unwrap(), &bank).unwrap();
            let mut longer = p.clone();
            longer.extend(extra);
            let long = sff_envelope(&SampledSignal::new(longer, 8000).unwrap(), &bank).unwrap();
            for k in 0..bank.num_bins() {
                prop_assert_eq!(short.row(k), &long.row(k)[..p.len()]);
            }
        }
    }
}
