use super::Tensor;
use crate::error::{Error, Result};

/// Floor applied to the target probability before taking its log.
pub const LOG_PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax of `[N, C]` logits, max-subtracted for stability.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, c) = logits.dims2("softmax")?;
    let mut p = logits.clone();
    for row in p.data_mut().chunks_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(p)
}

fn check(probs: &Tensor, targets: &[usize], class_weights: &[f64]) -> Result<(usize, usize)> {
    let (n, c) = probs.dims2("cross entropy")?;
    if targets.len() != n {
        return Err(Error::shape(
            "cross entropy",
            format!("{} targets for {n} rows", targets.len()),
        ));
    }
    if class_weights.len() != c {
        return Err(Error::shape(
            "cross entropy",
            format!("{} class weights for {c} classes", class_weights.len()),
        ));
    }
    if let Some(t) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::shape(
            "cross entropy",
            format!("target {t} out of {c} classes"),
        ));
    }
    if class_weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Domain("class weights must be >= 0".into()));
    }
    Ok((n, c))
}

/// Batch mean of `-w[t_i] ln p_i[t_i]`.
pub fn cross_entropy(probs: &Tensor, targets: &[usize], class_weights: &[f64]) -> Result<f64> {
    let (n, c) = check(probs, targets, class_weights)?;
    let total: f64 = probs
        .data()
        .chunks(c)
        .zip(targets)
        .map(|(row, &t)| -class_weights[t] * row[t].max(LOG_PROB_FLOOR).ln())
        .sum();
    Ok(total / n as f64)
}

/// Gradient of [`cross_entropy`] of `softmax(logits)` with respect to the
/// logits: `w[t_i] (p_i - onehot(t_i)) / N`.
pub fn cross_entropy_grad(
    probs: &Tensor,
    targets: &[usize],
    class_weights: &[f64],
) -> Result<Tensor> {
    let (n, c) = check(probs, targets, class_weights)?;
    let mut g = probs.clone();
    for (row, &t) in g.data_mut().chunks_mut(c).zip(targets) {
        row[t] -= 1.0;
        let k = class_weights[t] / n as f64;
        for v in row.iter_mut() {
            *v *= k;
        }
    }
    Ok(g)
}
