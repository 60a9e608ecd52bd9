//! Adaptive max pooling: the input plane is cut into an `out_h x out_w`
//! grid with boundaries at `floor(i * H / out_h)` and the maximum of each
//! patch is kept.

use super::Tensor;
use crate::error::{Error, Result};

fn edges(input: usize, output: usize) -> Vec<usize> {
    (0..=output).map(|i| i * input / output).collect()
}

/// Returns the pooled tensor and, per output element, the flat input index
/// of the selected maximum.
pub fn adaptive_maxpool(
    input: &Tensor,
    out_h: usize,
    out_w: usize,
) -> Result<(Tensor, Vec<usize>)> {
    let (n, c, h, w) = input.dims4("max pool")?;
    if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
        return Err(Error::shape(
            "max pool",
            format!("cannot pool {h}x{w} to {out_h}x{out_w}"),
        ));
    }
    let rows = edges(h, out_h);
    let cols = edges(w, out_w);
    let d = input.data();
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    let mut arg = Vec::with_capacity(out.capacity());
    for plane in 0..n * c {
        let base = plane * h * w;
        for py in 0..out_h {
            for px in 0..out_w {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = base + rows[py] * w + cols[px];
                for y in rows[py]..rows[py + 1] {
                    for x in cols[px]..cols[px + 1] {
                        let i = base + y * w + x;
                        if d[i] > best {
                            best = d[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    Ok((Tensor::from_vec(&[n, c, out_h, out_w], out)?, arg))
}

pub fn adaptive_maxpool_backward(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor,
) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(Error::shape(
            "max pool backward",
            "argmax and gradient lengths differ",
        ));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, g) in argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadrant_max() {
        let x = Tensor::from_vec(
            &[1, 1, 4, 4],
            vec![
                1.0, 2.0, 3.0, 4.0, //
                5.0, 6.0, 7.0, 8.0, //
                9.0, 1.0, 2.0, 3.0, //
                4.0, 5.0, 6.0, 0.0,
            ],
        )
        .unwrap();
        let (y, arg) = adaptive_maxpool(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[6.0, 8.0, 9.0, 6.0]);
        assert_eq!(arg, vec![5, 7, 8, 14]);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::filled(&[2, 3, 7, 9], -1.5);
        let (y, _) = adaptive_maxpool(&x, 3, 4).unwrap();
        assert!(y.data().iter().all(|&v| v == -1.5));
    }

    #[test]
    fn large_input_matches_patch_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (h, w) = (189, 284);
        let x = Tensor::from_vec(&[1, 1, h, w], (0..h * w).map(|_| rng.gen()).collect()).unwrap();
        let (y, _) = adaptive_maxpool(&x, 90, 135).unwrap();
        for py in 0..90 {
            for px in 0..135 {
                let (y0, y1) = (py * h / 90, (py + 1) * h / 90);
                let (x0, x1) = (px * w / 135, (px + 1) * w / 135);
                let mut m = f64::NEG_INFINITY;
                for r in y0..y1 {
                    for c in x0..x1 {
                        m = m.max(x.data()[r * w + c]);
                    }
                }
                assert_eq!(y.data()[py * 135 + px], m);
            }
        }
    }

    #[test]
    fn zero_output_rejected() {
        let x = Tensor::zeros(&[1, 1, 4, 4]);
        assert!(adaptive_maxpool(&x, 0, 2).is_err());
        assert!(adaptive_maxpool(&x, 5, 2).is_err());
    }
}
