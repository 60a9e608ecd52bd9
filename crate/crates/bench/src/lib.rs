//! Shared inputs for the criterion benches.

use pssff::synth;
use pssff::SampledSignal;

pub const FS: u32 = 16_000;

/// Three seconds of a 140 Hz synthetic vowel, the default segment length.
pub fn segment() -> SampledSignal {
    synth::vowel(FS, 140.0, 3.0).0
}
