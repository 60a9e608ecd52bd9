//! Mini-batch training with validation-based model selection and early
//! stopping.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::extract::feature_files;
use super::folds::{FoldPlan, Role};
use super::manifest::{Emotion, Manifest, ManifestEntry};
use super::metrics::{aggregate_utterance, class_weights, evaluate};
use crate::error::{Error, Result};
use crate::nn::{backward, batch_tensor, model_forward, AdamConfig, Mode, ModelConfig, ModelState};
use crate::spectrogram::{FeatureKind, FeatureMatrix};

/// One segment-level training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub utterance: String,
    pub label: usize,
    pub features: FeatureMatrix,
}

/// Validation metric used for model selection and early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    #[default]
    Wa,
    Uwa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub selection: SelectionMetric,
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 8,
            patience: 5,
            adam: AdamConfig::default(),
            seed: 0,
            selection: SelectionMetric::Wa,
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "epoch budget and patience must be positive".into(),
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch size must be at least 2 for batch norm".into(),
            ));
        }
        self.adam.validate()
    }
}

/// Tracks the best validation score; stops after `patience` epochs without
/// a strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records the score of a 1-based epoch; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
    pub fn best_score(&self) -> Option<f64> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_wa: f64,
    pub val_wa: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelState,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

pub fn write_history<W: Write>(history: &[EpochRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in history {
        wr.serialize(r)?;
    }
    wr.flush()
        .map_err(|e| Error::Format(format!("history: {e}")))?;
    Ok(())
}

/// Index lists of the mini-batches; a trailing batch of one is merged into
/// the previous batch so batch norm always sees two samples.
fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(|c| c.to_vec()).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePrediction {
    pub id: String,
    pub label: usize,
    pub predicted: usize,
    pub posterior: Vec<f64>,
}

/// Segment posteriors averaged per utterance, in first-appearance order.
pub fn predict_utterances(
    state: &ModelState,
    examples: &[Example],
    batch_size: usize,
) -> Result<Vec<UtterancePrediction>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, (usize, Vec<Vec<f64>>)> = HashMap::new();
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&FeatureMatrix> = chunk.iter().map(|e| &e.features).collect();
        let probs = state.predict(&batch_tensor(&refs)?)?;
        let c = probs.shape()[1];
        for (e, row) in chunk.iter().zip(probs.data().chunks(c)) {
            let g = groups.entry(&e.utterance).or_insert_with(|| {
                order.push(&e.utterance);
                (e.label, Vec::new())
            });
            if g.0 != e.label {
                return Err(Error::Manifest(format!(
                    "segments of {} carry different labels",
                    e.utterance
                )));
            }
            g.1.push(row.to_vec());
        }
    }
    order
        .into_iter()
        .map(|id| {
            let (label, posts) = &groups[id];
            let predicted = aggregate_utterance(posts)?;
            let n = posts.len() as f64;
            let mut posterior = vec![0.0; posts[0].len()];
            for p in posts {
                for (a, b) in posterior.iter_mut().zip(p) {
                    *a += b / n;
                }
            }
            Ok(UtterancePrediction {
                id: id.to_string(),
                label: *label,
                predicted,
                posterior,
            })
        })
        .collect()
}

fn validation_scores(
    state: &ModelState,
    examples: &[Example],
    batch_size: usize,
    classes: usize,
) -> Result<(f64, f64)> {
    let preds = predict_utterances(state, examples, batch_size)?;
    let p: Vec<usize> = preds.iter().map(|u| u.predicted).collect();
    let l: Vec<usize> = preds.iter().map(|u| u.label).collect();
    let r = evaluate(&p, &l, classes)?;
    Ok((r.wa, r.uwa))
}

/// Trains from scratch on `train`, scoring utterance-level accuracy on
/// `validation` after every epoch and keeping the best-scoring state.
pub fn train_model(
    train: &[Example],
    validation: &[Example],
    model: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.validate()?;
    if train.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} training examples; need at least 2",
            train.len()
        )));
    }
    if validation.is_empty() {
        return Err(Error::InsufficientData("empty validation set".into()));
    }
    let classes = model.num_classes;
    for e in train.iter().chain(validation) {
        if (e.features.rows(), e.features.width()) != (model.input_h, model.input_w) {
            return Err(Error::shape(
                "input",
                format!(
                    "{}: {}x{} features, model expects {}x{}",
                    e.utterance,
                    e.features.rows(),
                    e.features.width(),
                    model.input_h,
                    model.input_w
                ),
            ));
        }
        if e.label >= classes {
            return Err(Error::Domain(format!(
                "{}: label {} out of range",
                e.utterance, e.label
            )));
        }
    }
    let weights = if config.class_weighting {
        let mut counts = vec![0usize; classes];
        for e in train {
            counts[e.label] += 1;
        }
        class_weights(&counts)?
    } else {
        vec![1.0; classes]
    };

    let mut state = ModelState::init(model, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = state.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in batches(&order, config.batch_size).into_iter().enumerate() {
            let refs: Vec<&FeatureMatrix> = idx.iter().map(|&i| &train[i].features).collect();
            let targets: Vec<usize> = idx.iter().map(|&i| train[i].label).collect();
            let x = batch_tensor(&refs)?;
            let step = (|| {
                let pass = model_forward(&state, &x, Mode::Train(&mut rng))?;
                let (loss, grads) = backward(&state, &pass, &targets, &weights)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss {loss}")));
                }
                state.adam_step(&grads, &config.adam)?;
                state.update_running_stats(&pass)?;
                let probs = pass.probabilities();
                let hits = probs
                    .data()
                    .chunks(classes)
                    .zip(&targets)
                    .filter(|(row, &t)| argmax(row) == t)
                    .count();
                Ok((loss, hits))
            })();
            let (loss, hits) = step.map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("epoch {epoch}, batch {b}: {msg}"))
                }
                other => other,
            })?;
            loss_sum += loss * idx.len() as f64;
            correct += hits;
        }
        let (val_wa, val_uwa) = validation_scores(&state, validation, config.batch_size, classes)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_wa: 100.0 * correct as f64 / train.len() as f64,
            val_wa,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train WA {:.2} val WA {val_wa:.2} val UWA {val_uwa:.2}",
            record.train_loss,
            record.train_wa
        );
        history.push(record);
        let score = match config.selection {
            SelectionMetric::Wa => val_wa,
            SelectionMetric::Uwa => val_uwa,
        };
        if stopper.observe(epoch, score) {
            best = state.clone();
        }
        if stopper.should_stop() {
            log::info!("no improvement for {} epochs; stopping", config.patience);
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch: stopper.best_epoch(),
        history,
    })
}

/// Loads every segment file of the given entries, in manifest order.
pub fn load_examples(
    entries: &[&ManifestEntry],
    features_dir: &Path,
    kind: FeatureKind,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for e in entries {
        let files = feature_files(features_dir, &e.id, kind);
        if files.is_empty() {
            return Err(Error::Manifest(format!(
                "no {kind} features for {} in {}",
                e.id,
                features_dir.display()
            )));
        }
        for f in files {
            out.push(Example {
                utterance: e.id.clone(),
                label: e.label.index(),
                features: FeatureMatrix::load(&f)?,
            });
        }
    }
    Ok(out)
}

/// Trains one fold from cached features; the fold index offsets the seed.
pub fn train_fold(
    fold: &FoldPlan,
    manifest: &Manifest,
    features_dir: &Path,
    kind: FeatureKind,
    model: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let train = load_examples(&fold.select(manifest, Role::Train), features_dir, kind)?;
    let val = load_examples(&fold.select(manifest, Role::Validation), features_dir, kind)?;
    let cfg = TrainConfig {
        seed: config.seed.wrapping_add(fold.index as u64),
        ..config.clone()
    };
    train_model(&train, &val, model, &cfg)
}

/// Label names for a class count, falling back to `classN`.
pub fn class_names(classes: usize) -> Vec<String> {
    (0..classes)
        .map(|i| {
            Emotion::from_index(i).map_or_else(|| format!("class{i}"), |e| e.name().to_string())
        })
        .collect()
}
