//! Valid (unpadded, stride 1) 2-D cross-correlation over `[N, C, H, W]`.

use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

fn check(input: &Tensor, kernels: &Tensor, bias_len: usize) -> Result<[usize; 7]> {
    let (n, c, h, w) = input.dims4("conv input")?;
    let (o, kc, kh, kw) = kernels.dims4("conv kernels")?;
    if kc != c {
        return Err(Error::shape(
            "conv",
            format!("kernels expect {kc} channels, input has {c}"),
        ));
    }
    if kh > h || kw > w {
        return Err(Error::shape(
            "conv",
            format!("{kh}x{kw} kernel does not fit a {h}x{w} input"),
        ));
    }
    if bias_len != o {
        return Err(Error::shape(
            "conv",
            format!("{bias_len} biases for {o} kernels"),
        ));
    }
    Ok([n, c, h, w, o, kh, kw])
}

/// `out[o, y, x] = b[o] + sum_{c,i,j} in[c, y+i, x+j] * k[o, c, i, j]`.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let [n, c, h, w, o, kh, kw] = check(input, kernels, bias.len())?;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let in_sz = c * h * w;
    let out_sz = o * oh * ow;
    let k = kernels.data();
    let mut out = vec![0.0; n * out_sz];
    out.par_chunks_mut(out_sz)
        .zip(input.data().par_chunks(in_sz))
        .for_each(|(dst, src)| {
            for oc in 0..o {
                let plane = &mut dst[oc * oh * ow..(oc + 1) * oh * ow];
                plane.fill(bias[oc]);
                for ic in 0..c {
                    let chan = &src[ic * h * w..(ic + 1) * h * w];
                    for i in 0..kh {
                        for j in 0..kw {
                            let wt = k[((oc * c + ic) * kh + i) * kw + j];
                            for y in 0..oh {
                                let row = &chan[(y + i) * w + j..(y + i) * w + j + ow];
                                let orow = &mut plane[y * ow..(y + 1) * ow];
                                for (a, b) in orow.iter_mut().zip(row) {
                                    *a += wt * b;
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::from_vec(&[n, o, oh, ow], out)
}

pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Vec<f64>,
}

/// Gradients of a scalar loss given `d loss / d out`. Per-sample kernel
/// gradients are reduced in sample order, so results do not depend on the
/// thread count.
pub fn conv2d_backward(input: &Tensor, kernels: &Tensor, grad_out: &Tensor) -> Result<ConvGrads> {
    backward_impl(input, kernels, grad_out, true)
}

/// Like [`conv2d_backward`] but skips the input gradient, which is left
/// as zeros. Used for the first layer where nothing consumes it.
pub(crate) fn conv2d_param_grads(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    backward_impl(input, kernels, grad_out, false)
}

fn backward_impl(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<ConvGrads> {
    let o_len = kernels.shape().first().copied().unwrap_or(0);
    let [n, c, h, w, o, kh, kw] = check(input, kernels, o_len)?;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    if grad_out.shape() != [n, o, oh, ow] {
        return Err(Error::shape(
            "conv backward",
            format!(
                "gradient {:?}, expected {:?}",
                grad_out.shape(),
                [n, o, oh, ow]
            ),
        ));
    }
    let in_sz = c * h * w;
    let out_sz = o * oh * ow;
    let k = kernels.data();

    let per_sample: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = input
        .data()
        .par_chunks(in_sz)
        .zip(grad_out.data().par_chunks(out_sz))
        .map(|(src, g)| {
            let mut dk = vec![0.0; k.len()];
            let mut db = vec![0.0; o];
            let mut dx = vec![0.0; if want_input { in_sz } else { 0 }];
            for oc in 0..o {
                let gp = &g[oc * oh * ow..(oc + 1) * oh * ow];
                db[oc] = gp.iter().sum();
                for ic in 0..c {
                    let chan = &src[ic * h * w..(ic + 1) * h * w];
                    for i in 0..kh {
                        for j in 0..kw {
                            let idx = ((oc * c + ic) * kh + i) * kw + j;
                            let wt = k[idx];
                            let mut acc = 0.0;
                            for y in 0..oh {
                                let grow = &gp[y * ow..(y + 1) * ow];
                                let base = (y + i) * w + j;
                                let row = &chan[base..base + ow];
                                acc += row.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                                if want_input {
                                    let d0 = ic * h * w + base;
                                    for (d, gv) in dx[d0..d0 + ow].iter_mut().zip(grow) {
                                        *d += wt * gv;
                                    }
                                }
                            }
                            dk[idx] = acc;
                        }
                    }
                }
            }
            (dx, dk, db)
        })
        .collect();

    let mut dx = Vec::with_capacity(n * in_sz);
    if !want_input {
        dx.resize(n * in_sz, 0.0);
    }
    let mut dk = vec![0.0; k.len()];
    let mut db = vec![0.0; o];
    for (sx, sk, sb) in per_sample {
        dx.extend_from_slice(&sx);
        for (a, b) in dk.iter_mut().zip(&sk) {
            *a += b;
        }
        for (a, b) in db.iter_mut().zip(&sb) {
            *a += b;
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_vec(&[n, c, h, w], dx)?,
        kernels: Tensor::from_vec(kernels.shape(), dk)?,
        bias: db,
    })
}
