//! The configurable CNN: a stack of conv → batch norm → ReLU → adaptive max
//! pool blocks, a ReLU dense layer with dropout, and a softmax output layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::activation::{dropout_mask, relu, relu_backward};
use super::adam::{adam_step, AdamConfig, AdamState};
use super::batchnorm::{
    batchnorm_backward, batchnorm_forward_infer, batchnorm_forward_train, update_running, BnCache,
};
use super::conv::{conv2d_backward, conv2d_forward, conv2d_param_grads};
use super::dense::{dense_backward, dense_forward};
use super::loss::{cross_entropy, cross_entropy_grad, softmax};
use super::pool::{adaptive_maxpool, adaptive_maxpool_backward};
use super::Tensor;
use crate::error::{Error, Result};
use crate::spectrogram::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub channels: usize,
    pub pool_h: usize,
    pub pool_w: usize,
}

impl BlockConfig {
    pub fn new(kernel: (usize, usize), channels: usize, pool: (usize, usize)) -> Self {
        Self {
            kernel_h: kernel.0,
            kernel_w: kernel.1,
            channels,
            pool_h: pool.0,
            pool_w: pool.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub blocks: Vec<BlockConfig>,
    pub dense_width: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

/// Output shape of one named stage as `[channels, height, width]`, or
/// `[features]` after flattening.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageShape {
    pub stage: String,
    pub shape: Vec<usize>,
}

impl ModelConfig {
    /// Three blocks (16@12x16 → 90x135, 24@8x12 → 34x50, 32@5x7 → 6x8),
    /// dense 64, four classes, on a 200 x `width` input.
    pub fn standard(width: usize) -> Self {
        Self {
            input_h: 200,
            input_w: width,
            blocks: vec![
                BlockConfig::new((12, 16), 16, (90, 135)),
                BlockConfig::new((8, 12), 24, (34, 50)),
                BlockConfig::new((5, 7), 32, (6, 8)),
            ],
            dense_width: 64,
            num_classes: 4,
            dropout_rate: 0.5,
        }
    }

    /// Per-stage output shapes; fails if any kernel or pool does not fit.
    pub fn trace(&self) -> Result<Vec<StageShape>> {
        if self.input_h == 0 || self.input_w == 0 {
            return Err(Error::Config("input dimensions must be positive".into()));
        }
        if self.blocks.is_empty() || self.dense_width == 0 || self.num_classes < 2 {
            return Err(Error::Config(
                "need at least one block, a dense layer and two classes".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        let mut out = Vec::new();
        let (mut c, mut h, mut w) = (1, self.input_h, self.input_w);
        for (i, b) in self.blocks.iter().enumerate() {
            let n = i + 1;
            if b.channels == 0 || b.kernel_h == 0 || b.kernel_w == 0 {
                return Err(Error::Config(format!("block {n}: zero-sized kernel")));
            }
            if b.kernel_h > h || b.kernel_w > w {
                return Err(Error::shape(
                    format!("block {n} conv"),
                    format!("{}x{} kernel on {h}x{w} input", b.kernel_h, b.kernel_w),
                ));
            }
            c = b.channels;
            h = h - b.kernel_h + 1;
            w = w - b.kernel_w + 1;
            out.push(StageShape {
                stage: format!("block{n}.conv"),
                shape: vec![c, h, w],
            });
            let fits = b.pool_h > 0 && b.pool_w > 0 && b.pool_h <= h && b.pool_w <= w;
            if !fits || (b.pool_h, b.pool_w) == (h, w) {
                return Err(Error::shape(
                    format!("block {n} pool"),
                    format!("{}x{} output from {h}x{w} input", b.pool_h, b.pool_w),
                ));
            }
            h = b.pool_h;
            w = b.pool_w;
            out.push(StageShape {
                stage: format!("block{n}.pool"),
                shape: vec![c, h, w],
            });
        }
        out.push(StageShape {
            stage: "flatten".into(),
            shape: vec![c * h * w],
        });
        out.push(StageShape {
            stage: "dense".into(),
            shape: vec![self.dense_width],
        });
        out.push(StageShape {
            stage: "output".into(),
            shape: vec![self.num_classes],
        });
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.trace().map(|_| ())
    }

    fn flat_len(&self) -> Result<usize> {
        let trace = self.trace()?;
        Ok(trace[trace.len() - 3].shape[0])
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }

    /// SHA-256 of the JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_json()).into()
    }

    fn param_layout(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let flat = self.flat_len()?;
        let mut v = Vec::new();
        let mut c_in = 1;
        for (i, b) in self.blocks.iter().enumerate() {
            let n = i + 1;
            v.push((
                format!("block{n}.conv.weight"),
                vec![b.channels, c_in, b.kernel_h, b.kernel_w],
            ));
            v.push((format!("block{n}.conv.bias"), vec![b.channels]));
            v.push((format!("block{n}.bn.scale"), vec![b.channels]));
            v.push((format!("block{n}.bn.shift"), vec![b.channels]));
            c_in = b.channels;
        }
        v.push(("dense.weight".into(), vec![flat, self.dense_width]));
        v.push(("dense.bias".into(), vec![self.dense_width]));
        v.push((
            "output.weight".into(),
            vec![self.dense_width, self.num_classes],
        ));
        v.push(("output.bias".into(), vec![self.num_classes]));
        Ok(v)
    }
}

/// Weights, batch-norm running statistics and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub(crate) config: ModelConfig,
    pub(crate) names: Vec<String>,
    pub(crate) params: Vec<Tensor>,
    pub(crate) running_mean: Vec<Vec<f64>>,
    pub(crate) running_var: Vec<Vec<f64>>,
    pub(crate) adam: AdamState,
}

pub enum Mode<'a> {
    Infer,
    /// Batch statistics and dropout; the generator supplies dropout masks.
    Train(&'a mut ChaCha8Rng),
}

struct BlockCache {
    input: Tensor,
    bn: BnCache,
    pool_arg: Vec<usize>,
}

struct TrainCache {
    blocks: Vec<BlockCache>,
    flat: Tensor,
    hidden_pre: Tensor,
    mask: Vec<f64>,
    hidden_out: Tensor,
}

/// Result of [`model_forward`]; training passes keep what backprop needs.
pub struct ForwardPass {
    probs: Tensor,
    cache: Option<TrainCache>,
}

impl ForwardPass {
    /// `[N, classes]` softmax outputs.
    pub fn probabilities(&self) -> &Tensor {
        &self.probs
    }
    pub fn into_probabilities(self) -> Tensor {
        self.probs
    }
    pub fn is_training(&self) -> bool {
        self.cache.is_some()
    }
}

impl ModelState {
    /// Fan-in scaled uniform weights (bound `sqrt(6 / fan_in)`), zero biases,
    /// unit batch-norm scale, running variance 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let layout = config.param_layout()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(layout.len());
        let mut params = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let t = if name.ends_with(".weight") {
                let fan_in: usize = if shape.len() == 4 {
                    shape[1..].iter().product()
                } else {
                    shape[0]
                };
                let bound = (6.0 / fan_in as f64).sqrt();
                let n = shape.iter().product();
                Tensor::from_vec(
                    &shape,
                    (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
                )?
            } else if name.ends_with(".scale") {
                Tensor::filled(&shape, 1.0)
            } else {
                Tensor::zeros(&shape)
            };
            names.push(name);
            params.push(t);
        }
        let running_mean = config
            .blocks
            .iter()
            .map(|b| vec![0.0; b.channels])
            .collect();
        let running_var = config
            .blocks
            .iter()
            .map(|b| vec![1.0; b.channels])
            .collect();
        let adam = AdamState::for_params(&params);
        Ok(Self {
            config,
            names,
            params,
            running_mean,
            running_var,
            adam,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }
    pub fn param_names(&self) -> &[String] {
        &self.names
    }
    pub fn params(&self) -> &[Tensor] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }
    pub fn running_mean(&self, block: usize) -> &[f64] {
        &self.running_mean[block]
    }
    pub fn running_var(&self, block: usize) -> &[f64] {
        &self.running_var[block]
    }
    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn adam_step(&mut self, grads: &[Tensor], config: &AdamConfig) -> Result<()> {
        adam_step(&mut self.params, grads, &mut self.adam, config)
    }

    /// Folds the batch statistics of a training pass into the running ones.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) -> Result<()> {
        let cache = pass
            .cache
            .as_ref()
            .ok_or_else(|| Error::Usage("running statistics need a training pass".into()))?;
        for (b, bc) in cache.blocks.iter().enumerate() {
            update_running(&mut self.running_mean[b], &bc.bn.batch_mean);
            update_running(&mut self.running_var[b], &bc.bn.batch_var);
        }
        Ok(())
    }

    /// Forward, backward, Adam update and running-statistics update on one
    /// mini-batch. Returns the batch loss.
    pub fn train_step(
        &mut self,
        batch: &Tensor,
        targets: &[usize],
        class_weights: &[f64],
        adam: &AdamConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let pass = model_forward(self, batch, Mode::Train(rng))?;
        let (loss, grads) = backward(self, &pass, targets, class_weights)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss is {loss}")));
        }
        self.adam_step(&grads, adam)?;
        self.update_running_stats(&pass)?;
        Ok(loss)
    }

    /// Inference probabilities, `[N, classes]`.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(model_forward(self, batch, Mode::Infer)?.into_probabilities())
    }

    /// Rebuilds a state from named tensors; every tensor must be present.
    pub(crate) fn from_parts(
        config: ModelConfig,
        tensors: Vec<(String, Tensor)>,
        adam_t: u64,
    ) -> Result<Self> {
        let mut state = Self::init(config, 0)?;
        let mut seen = vec![false; state.params.len() * 3 + state.config.blocks.len() * 2];
        for (name, t) in tensors {
            let (slot, target): (usize, &mut Tensor) =
                if let Some(i) = state.names.iter().position(|n| *n == name) {
                    (i, &mut state.params[i])
                } else if let Some(i) = name
                    .strip_prefix("adam.m.")
                    .and_then(|n| state.names.iter().position(|x| x == n))
                {
                    (state.names.len() + i, &mut state.adam.m[i])
                } else if let Some(i) = name
                    .strip_prefix("adam.v.")
                    .and_then(|n| state.names.iter().position(|x| x == n))
                {
                    (2 * state.names.len() + i, &mut state.adam.v[i])
                } else if let Some((b, stat)) = parse_running(&name) {
                    if b >= state.config.blocks.len() {
                        return Err(Error::Format(format!("unknown tensor {name}")));
                    }
                    let dst = if stat {
                        &mut state.running_mean[b]
                    } else {
                        &mut state.running_var[b]
                    };
                    if t.shape() != [dst.len()] {
                        return Err(Error::Format(format!(
                            "tensor {name} has shape {:?}",
                            t.shape()
                        )));
                    }
                    dst.copy_from_slice(t.data());
                    let slot = 3 * state.names.len() + 2 * b + usize::from(!stat);
                    seen[slot] = true;
                    continue;
                } else {
                    return Err(Error::Format(format!("unknown tensor {name}")));
                };
            if t.shape() != target.shape() {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    target.shape()
                )));
            }
            *target = t;
            seen[slot] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!("checkpoint is missing tensor #{i}")));
        }
        state.adam.t = adam_t;
        Ok(state)
    }

    /// Every stored tensor with its name, in checkpoint order.
    pub(crate) fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut v: Vec<(String, Tensor)> = self
            .names
            .iter()
            .cloned()
            .zip(self.params.iter().cloned())
            .collect();
        for (b, (m, var)) in self.running_mean.iter().zip(&self.running_var).enumerate() {
            let n = b + 1;
            v.push((
                format!("block{n}.bn.running_mean"),
                Tensor::from_vec(&[m.len()], m.clone()).expect("non-empty"),
            ));
            v.push((
                format!("block{n}.bn.running_var"),
                Tensor::from_vec(&[var.len()], var.clone()).expect("non-empty"),
            ));
        }
        for (name, m) in self.names.iter().zip(&self.adam.m) {
            v.push((format!("adam.m.{name}"), m.clone()));
        }
        for (name, m) in self.names.iter().zip(&self.adam.v) {
            v.push((format!("adam.v.{name}"), m.clone()));
        }
        v
    }
}

/// `(block index, is_mean)` for `blockN.bn.running_{mean,var}`.
fn parse_running(name: &str) -> Option<(usize, bool)> {
    let rest = name.strip_prefix("block")?;
    let (num, stat) = rest.split_once(".bn.running_")?;
    let n: usize = num.parse().ok()?;
    let is_mean = match stat {
        "mean" => true,
        "var" => false,
        _ => return None,
    };
    n.checked_sub(1).map(|b| (b, is_mean))
}

/// Stacks equally sized feature matrices into a `[N, 1, rows, width]` batch.
pub fn batch_tensor(features: &[&FeatureMatrix]) -> Result<Tensor> {
    let first = features
        .first()
        .ok_or_else(|| Error::shape("batch", "no feature matrices"))?;
    let (h, w) = (first.rows(), first.width());
    let mut data = Vec::with_capacity(features.len() * h * w);
    for f in features {
        if (f.rows(), f.width()) != (h, w) {
            return Err(Error::shape(
                "batch",
                format!("{}x{} matrix among {h}x{w}", f.rows(), f.width()),
            ));
        }
        data.extend_from_slice(f.values());
    }
    Tensor::from_vec(&[features.len(), 1, h, w], data)
}

/// Runs the network on a `[N, 1, H, W]` batch.
pub fn model_forward(state: &ModelState, input: &Tensor, mode: Mode<'_>) -> Result<ForwardPass> {
    let cfg = &state.config;
    let (n, c, h, w) = input.dims4("input")?;
    if (c, h, w) != (1, cfg.input_h, cfg.input_w) {
        return Err(Error::shape(
            "input",
            format!(
                "got {c}x{h}x{w}, model expects 1x{}x{}",
                cfg.input_h, cfg.input_w
            ),
        ));
    }
    let train = matches!(mode, Mode::Train(_));
    let mut blocks = Vec::new();
    let mut x = input.clone();
    for (b, bc) in cfg.blocks.iter().enumerate() {
        let p = &state.params[4 * b..4 * b + 4];
        let conv = conv2d_forward(&x, &p[0], p[1].data())?;
        let (normed, bn_cache) = if train {
            let (y, cache) = batchnorm_forward_train(&conv, p[2].data(), p[3].data())?;
            (y, Some(cache))
        } else {
            let y = batchnorm_forward_infer(
                &conv,
                p[2].data(),
                p[3].data(),
                &state.running_mean[b],
                &state.running_var[b],
            )?;
            (y, None)
        };
        drop(conv);
        let act = relu(&normed);
        drop(normed);
        let (pooled, arg) = adaptive_maxpool(&act, bc.pool_h, bc.pool_w)?;
        if let Some(bn) = bn_cache {
            blocks.push(BlockCache {
                input: x,
                bn,
                pool_arg: arg,
            });
        }
        x = pooled;
    }
    let flat_len = x.len() / n;
    let flat = x.reshape(&[n, flat_len])?;
    let nb = 4 * cfg.blocks.len();
    let p = &state.params[nb..nb + 4];
    let hidden_pre = dense_forward(&flat, &p[0], p[1].data())?;
    let mut hidden = relu(&hidden_pre);
    let mut mask = Vec::new();
    if let Mode::Train(rng) = mode {
        if cfg.dropout_rate > 0.0 {
            mask = dropout_mask(hidden.len(), cfg.dropout_rate, rng);
            for (v, m) in hidden.data_mut().iter_mut().zip(&mask) {
                *v *= m;
            }
        }
    }
    let logits = dense_forward(&hidden, &p[2], p[3].data())?;
    let probs = softmax(&logits)?;
    if !probs.all_finite() {
        return Err(Error::NonFinite("network output".into()));
    }
    let cache = train.then_some(TrainCache {
        blocks,
        flat,
        hidden_pre,
        mask,
        hidden_out: hidden,
    });
    Ok(ForwardPass { probs, cache })
}

/// Class-weighted cross-entropy of a pass against `targets`.
pub fn loss(pass: &ForwardPass, targets: &[usize], class_weights: &[f64]) -> Result<f64> {
    cross_entropy(&pass.probs, targets, class_weights)
}

/// Loss and exact gradients for every parameter, aligned with
/// [`ModelState::params`]. Requires a training pass.
pub fn backward(
    state: &ModelState,
    pass: &ForwardPass,
    targets: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Vec<Tensor>)> {
    let cache = pass
        .cache
        .as_ref()
        .ok_or_else(|| Error::Usage("backward needs a cached training forward pass".into()))?;
    let cfg = &state.config;
    let loss = cross_entropy(&pass.probs, targets, class_weights)?;
    let mut grads: Vec<Option<Tensor>> = vec![None; state.params.len()];
    let nb = 4 * cfg.blocks.len();

    let d_logits = cross_entropy_grad(&pass.probs, targets, class_weights)?;
    let out = dense_backward(&cache.hidden_out, &state.params[nb + 2], &d_logits)?;
    grads[nb + 2] = Some(out.weights);
    grads[nb + 3] = Some(Tensor::from_vec(&[out.bias.len()], out.bias)?);
    let mut d_hidden = out.input;
    if !cache.mask.is_empty() {
        for (g, m) in d_hidden.data_mut().iter_mut().zip(&cache.mask) {
            *g *= m;
        }
    }
    let d_hidden_pre = relu_backward(&cache.hidden_pre, &d_hidden)?;
    let dense = dense_backward(&cache.flat, &state.params[nb], &d_hidden_pre)?;
    grads[nb] = Some(dense.weights);
    grads[nb + 1] = Some(Tensor::from_vec(&[dense.bias.len()], dense.bias)?);

    let mut d = dense.input;
    for (b, bc) in cfg.blocks.iter().enumerate().rev() {
        let blk = &cache.blocks[b];
        let p = &state.params[4 * b..4 * b + 4];
        let (n, _, _, _) = blk.bn.xhat.dims4("backward")?;
        let d_pooled = d.reshape(&[n, bc.channels, bc.pool_h, bc.pool_w])?;
        let mut d_act = adaptive_maxpool_backward(blk.bn.xhat.shape(), &blk.pool_arg, &d_pooled)?;
        let (_, c, h, w) = blk.bn.xhat.dims4("backward")?;
        let plane = h * w;
        let (scale, shift) = (p[2].data(), p[3].data());
        for (i, (gc, xc)) in d_act
            .data_mut()
            .chunks_mut(plane)
            .zip(blk.bn.xhat.data().chunks(plane))
            .enumerate()
        {
            let ch = i % c;
            for (g, xh) in gc.iter_mut().zip(xc) {
                if scale[ch] * xh + shift[ch] <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let bn = batchnorm_backward(&d_act, scale, &blk.bn)?;
        drop(d_act);
        let conv = if b == 0 {
            conv2d_param_grads(&blk.input, &p[0], &bn.input)?
        } else {
            conv2d_backward(&blk.input, &p[0], &bn.input)?
        };
        grads[4 * b] = Some(conv.kernels);
        grads[4 * b + 1] = Some(Tensor::from_vec(&[conv.bias.len()], conv.bias)?);
        grads[4 * b + 2] = Some(Tensor::from_vec(&[bn.scale.len()], bn.scale)?);
        grads[4 * b + 3] = Some(Tensor::from_vec(&[bn.shift.len()], bn.shift)?);
        d = conv.input;
    }
    let grads: Vec<Tensor> = grads
        .into_iter()
        .map(|g| g.expect("every gradient set"))
        .collect();
    if let Some(i) = grads.iter().position(|g| !g.all_finite()) {
        return Err(Error::NonFinite(format!("gradient of {}", state.names[i])));
    }
    Ok((loss, grads))
}
