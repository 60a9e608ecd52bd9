//! Per-channel batch normalization over `[N, C, H, W]`.
//!
//! Training mode standardizes with the batch mean and biased variance over
//! the batch and spatial axes; inference mode uses running statistics.

use super::Tensor;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

fn check_params(c: usize, scale: &[f64], shift: &[f64]) -> Result<()> {
    if scale.len() != c || shift.len() != c {
        return Err(Error::shape(
            "batch norm",
            format!(
                "{c} channels, {} scales, {} shifts",
                scale.len(),
                shift.len()
            ),
        ));
    }
    Ok(())
}

pub fn batchnorm_forward_train(
    x: &Tensor,
    scale: &[f64],
    shift: &[f64],
) -> Result<(Tensor, BnCache)> {
    let (n, c, h, w) = x.dims4("batch norm")?;
    check_params(c, scale, shift)?;
    if n < 2 {
        return Err(Error::DegenerateBatch);
    }
    let plane = h * w;
    let m = (n * plane) as f64;
    let d = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for s_idx in 0..n {
            s += d[(s_idx * c + ch) * plane..][..plane].iter().sum::<f64>();
        }
        let mu = s / m;
        let mut v = 0.0;
        for s_idx in 0..n {
            v += d[(s_idx * c + ch) * plane..][..plane]
                .iter()
                .map(|x| (x - mu) * (x - mu))
                .sum::<f64>();
        }
        mean[ch] = mu;
        var[ch] = v / m;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; d.len()];
    let mut out = vec![0.0; d.len()];
    for (i, chunk) in d.chunks(plane).enumerate() {
        let ch = i % c;
        let base = i * plane;
        for (j, v) in chunk.iter().enumerate() {
            let xh = (v - mean[ch]) * inv_std[ch];
            xhat[base + j] = xh;
            out[base + j] = scale[ch] * xh + shift[ch];
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), out)?,
        BnCache {
            xhat: Tensor::from_vec(x.shape(), xhat)?,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

pub fn batchnorm_forward_infer(
    x: &Tensor,
    scale: &[f64],
    shift: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> Result<Tensor> {
    let (_, c, h, w) = x.dims4("batch norm")?;
    check_params(c, scale, shift)?;
    check_params(c, running_mean, running_var)?;
    let plane = h * w;
    let mut out = x.data().to_vec();
    for (i, chunk) in out.chunks_mut(plane).enumerate() {
        let ch = i % c;
        let inv = 1.0 / (running_var[ch] + BN_EPS).sqrt();
        for v in chunk {
            *v = scale[ch] * (*v - running_mean[ch]) * inv + shift[ch];
        }
    }
    Tensor::from_vec(x.shape(), out)
}

/// `running = momentum * running + (1 - momentum) * batch`.
pub fn update_running(running: &mut [f64], batch: &[f64]) {
    for (r, b) in running.iter_mut().zip(batch) {
        *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
    }
}

pub struct BnGrads {
    pub input: Tensor,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

/// Backward pass of the training-mode transform.
pub fn batchnorm_backward(grad_out: &Tensor, scale: &[f64], cache: &BnCache) -> Result<BnGrads> {
    let (n, c, h, w) = grad_out.dims4("batch norm backward")?;
    if cache.xhat.shape() != grad_out.shape() {
        return Err(Error::shape(
            "batch norm backward",
            format!(
                "gradient {:?} vs cached {:?}",
                grad_out.shape(),
                cache.xhat.shape()
            ),
        ));
    }
    let plane = h * w;
    let m = (n * plane) as f64;
    let g = grad_out.data();
    let xh = cache.xhat.data();
    let mut dscale = vec![0.0; c];
    let mut dshift = vec![0.0; c];
    for (i, (gc, xc)) in g.chunks(plane).zip(xh.chunks(plane)).enumerate() {
        let ch = i % c;
        dshift[ch] += gc.iter().sum::<f64>();
        dscale[ch] += gc.iter().zip(xc).map(|(a, b)| a * b).sum::<f64>();
    }
    let mut dx = vec![0.0; g.len()];
    for (i, ((gc, xc), dc)) in g
        .chunks(plane)
        .zip(xh.chunks(plane))
        .zip(dx.chunks_mut(plane))
        .enumerate()
    {
        let ch = i % c;
        let k = scale[ch] * cache.inv_std[ch] / m;
        for ((d, gv), xv) in dc.iter_mut().zip(gc).zip(xc) {
            *d = k * (m * gv - dshift[ch] - xv * dscale[ch]);
        }
    }
    Ok(BnGrads {
        input: Tensor::from_vec(grad_out.shape(), dx)?,
        scale: dscale,
        shift: dshift,
    })
}
