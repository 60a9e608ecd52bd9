use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pssff::pipeline::{ExtractionConfig, SelectionMetric, TrainConfig};
use pssff::spectrogram::{FeatureKind, GciAveraging, StftConfig};
use pssff::zff::{TrendWindow, ZffConfig};

/// Pitch-synchronous SFF spectrograms and a CNN emotion classifier.
#[derive(Debug, Parser)]
#[command(name = "pssff", version, args_override_self = true)]
pub struct Cli {
    /// File of `key = value` lines using long option names; command-line
    /// flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-utterance parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one feature file per segment and kind.
    #[command(args_override_self = true)]
    Extract(ExtractArgs),
    /// List detected glottal closure instants.
    #[command(args_override_self = true)]
    Gci(GciArgs),
    /// Write pitch-synchronous SFF and STFT images of one segment as PGM.
    #[command(args_override_self = true)]
    Render(RenderArgs),
    /// Cross-validated training from extracted features.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score utterance predictions or a trained checkpoint.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Largest pitch-synchronous column count over a manifest.
    #[command(args_override_self = true)]
    Scan(ScanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    PitchSyncSff,
    SffFixedFrame,
    Stft,
    All,
}

impl KindArg {
    pub fn kinds(self) -> Vec<FeatureKind> {
        match self {
            KindArg::PitchSyncSff => vec![FeatureKind::PitchSyncSff],
            KindArg::SffFixedFrame => vec![FeatureKind::SffFixedFrame],
            KindArg::Stft => vec![FeatureKind::Stft],
            KindArg::All => FeatureKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SingleKindArg {
    PitchSyncSff,
    SffFixedFrame,
    Stft,
}

impl From<SingleKindArg> for FeatureKind {
    fn from(k: SingleKindArg) -> Self {
        match k {
            SingleKindArg::PitchSyncSff => FeatureKind::PitchSyncSff,
            SingleKindArg::SffFixedFrame => FeatureKind::SffFixedFrame,
            SingleKindArg::Stft => FeatureKind::Stft,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectArg {
    Wa,
    Uwa,
}

#[derive(Debug, Clone, Args)]
pub struct AudioArgs {
    /// Channel to read from multichannel files (0-based).
    #[arg(long)]
    pub channel: Option<u16>,
}

#[derive(Debug, Clone, Args)]
pub struct ZffArgs {
    /// Fixed ZFF trend window in ms; default is 1.5 x the estimated pitch period.
    #[arg(long, value_name = "MS")]
    pub trend_window_ms: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub trend_passes: usize,
    /// Cascaded zero-frequency resonators.
    #[arg(long, default_value_t = 2)]
    pub resonator_passes: usize,
}

impl ZffArgs {
    pub fn config(&self) -> ZffConfig {
        ZffConfig {
            trend_window: self
                .trend_window_ms
                .map_or(TrendWindow::AutoPitch, TrendWindow::FixedMs),
            trend_passes: self.trend_passes,
            resonator_passes: self.resonator_passes,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DspArgs {
    #[arg(long, default_value_t = 3.0)]
    pub segment_seconds: f64,
    /// SFF bin spacing.
    #[arg(long, default_value_t = 20.0)]
    pub spacing_hz: f64,
    /// SFF pole radius r.
    #[arg(long, default_value_t = 0.9394)]
    pub pole_radius: f64,
    #[arg(long, default_value_t = 0.0)]
    pub band_lo_hz: f64,
    #[arg(long, default_value_t = 4000.0)]
    pub band_hi_hz: f64,
    /// Feature width after zero padding.
    #[arg(long, default_value_t = 1077)]
    pub width: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub log_floor: f64,
    /// Average GCI intervals with the literal inclusive sum.
    #[arg(long)]
    pub inclusive_gci_sum: bool,
    #[arg(long, default_value_t = 20.0)]
    pub fixed_frame_ms: f64,
    #[arg(long, default_value_t = 0.5)]
    pub fixed_frame_overlap: f64,
    #[arg(long, default_value_t = 40.0)]
    pub stft_frame_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    pub stft_hop_ms: f64,
    /// STFT DFT size; default is sample rate / 20 (800 at 16 kHz).
    #[arg(long)]
    pub dft_length: Option<usize>,
    #[command(flatten)]
    pub zff: ZffArgs,
}

impl DspArgs {
    pub fn config(&self) -> ExtractionConfig {
        ExtractionConfig {
            segment_seconds: self.segment_seconds,
            spacing_hz: self.spacing_hz,
            pole_radius: self.pole_radius,
            band_lo_hz: self.band_lo_hz,
            band_hi_hz: self.band_hi_hz,
            zff: self.zff.config(),
            averaging: if self.inclusive_gci_sum {
                GciAveraging::InclusiveSum
            } else {
                GciAveraging::HalfOpen
            },
            width: self.width,
            log_floor: self.log_floor,
            fixed_frame_ms: self.fixed_frame_ms,
            fixed_frame_overlap: self.fixed_frame_overlap,
            stft: StftConfig {
                frame_ms: self.stft_frame_ms,
                hop_ms: self.stft_hop_ms,
                dft_length: self.dft_length,
                band_lo_hz: self.band_lo_hz,
                band_hi_hz: self.band_hi_hz,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// WAV files or directories (searched recursively for .wav).
    pub inputs: Vec<PathBuf>,
    /// Take inputs and utterance ids from a manifest instead.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, short, default_value = "features")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::PitchSyncSff)]
    pub kind: KindArg,
    #[command(flatten)]
    pub audio: AudioArgs,
    #[command(flatten)]
    pub dsp: DspArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GciArgs {
    /// WAV files or directories.
    pub inputs: Vec<PathBuf>,
    /// Print seconds with six decimals instead of sample indices.
    #[arg(long)]
    pub seconds: bool,
    /// Write `<stem>.gci` files here instead of printing.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub audio: AudioArgs,
    #[command(flatten)]
    pub zff: ZffArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    pub input: PathBuf,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    /// Segment to render (0-based).
    #[arg(long, default_value_t = 0)]
    pub segment: usize,
    /// Also write the fixed-frame SFF image.
    #[arg(long)]
    pub fixed_frame: bool,
    #[command(flatten)]
    pub audio: AudioArgs,
    #[command(flatten)]
    pub dsp: DspArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 64)]
    pub dense_width: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// CSV with columns `id,path,label,session,speaker,improvised`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of extracted feature files.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value_t = SingleKindArg::PitchSyncSff)]
    pub kind: SingleKindArg,
    #[arg(long, short, default_value = "runs")]
    pub out: PathBuf,
    /// Also run every fold with validation and test speakers swapped.
    #[arg(long)]
    pub both_orders: bool,
    /// Keep only manifest rows flagged improvised.
    #[arg(long)]
    pub improvised_only: bool,
    /// Run only this fold index.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_epsilon: f64,
    /// Validation metric for model selection.
    #[arg(long, value_enum, default_value_t = SelectArg::Wa)]
    pub select: SelectArg,
    /// Train with unit class weights.
    #[arg(long)]
    pub no_class_weights: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

impl TrainArgs {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            adam: pssff::nn::AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.adam_epsilon,
            },
            seed,
            selection: match self.select {
                SelectArg::Wa => SelectionMetric::Wa,
                SelectArg::Uwa => SelectionMetric::Uwa,
            },
            class_weighting: !self.no_class_weights,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// CSV with columns `id,label,predicted`.
    #[arg(long, required_unless_present = "checkpoint")]
    pub predictions: Option<PathBuf>,
    /// Score this checkpoint on manifest utterances instead.
    #[arg(long, requires_all = ["manifest", "features"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SingleKindArg::PitchSyncSff)]
    pub kind: SingleKindArg,
    /// Restrict checkpoint scoring to these speakers.
    #[arg(long, value_delimiter = ',')]
    pub speakers: Vec<String>,
    /// Write `report.json` and `report.txt` here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    /// Utterance manifest CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub dsp: DspArgs,
}
