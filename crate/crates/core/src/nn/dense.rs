use super::Tensor;
use crate::error::{Error, Result};

/// `y = x W + b` with `x: [N, D]`, `W: [D, M]`.
pub fn dense_forward(x: &Tensor, weights: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (n, d) = x.dims2("dense input")?;
    let (wd, m) = weights.dims2("dense weights")?;
    if wd != d || bias.len() != m {
        return Err(Error::shape(
            "dense",
            format!("input width {d}, weights {wd}x{m}, {} biases", bias.len()),
        ));
    }
    let w = weights.data();
    let mut out = Vec::with_capacity(n * m);
    for row in x.data().chunks(d) {
        let mut acc = bias.to_vec();
        for (xi, wrow) in row.iter().zip(w.chunks(m)) {
            for (a, wv) in acc.iter_mut().zip(wrow) {
                *a += xi * wv;
            }
        }
        out.extend(acc);
    }
    Tensor::from_vec(&[n, m], out)
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

pub fn dense_backward(x: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let (n, d) = x.dims2("dense input")?;
    let (_, m) = weights.dims2("dense weights")?;
    if grad_out.shape() != [n, m] {
        return Err(Error::shape(
            "dense backward",
            format!("gradient {:?}", grad_out.shape()),
        ));
    }
    let w = weights.data();
    let mut dx = vec![0.0; n * d];
    let mut dw = vec![0.0; d * m];
    let mut db = vec![0.0; m];
    for ((xrow, grow), dxrow) in x
        .data()
        .chunks(d)
        .zip(grad_out.data().chunks(m))
        .zip(dx.chunks_mut(d))
    {
        for (b, g) in db.iter_mut().zip(grow) {
            *b += g;
        }
        for (j, (xj, dxj)) in xrow.iter().zip(dxrow.iter_mut()).enumerate() {
            let wrow = &w[j * m..(j + 1) * m];
            let dwrow = &mut dw[j * m..(j + 1) * m];
            let mut acc = 0.0;
            for ((wv, dwv), g) in wrow.iter().zip(dwrow.iter_mut()).zip(grow) {
                acc += wv * g;
                *dwv += xj * g;
            }
            *dxj = acc;
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(&[n, d], dx)?,
        weights: Tensor::from_vec(&[d, m], dw)?,
        bias: db,
    })
}
