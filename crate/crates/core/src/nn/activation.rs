use super::Tensor;
use crate::error::{Error, Result};

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = v.max(0.0);
    }
    y
}

/// Passes gradient where the forward input was positive.
pub fn relu_backward(pre_activation: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if pre_activation.shape() != grad_out.shape() {
        return Err(Error::shape(
            "relu backward",
            "gradient and input shapes differ",
        ));
    }
    let mut g = grad_out.clone();
    for (d, x) in g.data_mut().iter_mut().zip(pre_activation.data()) {
        if *x <= 0.0 {
            *d = 0.0;
        }
    }
    Ok(g)
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut impl rand::Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect()
}
