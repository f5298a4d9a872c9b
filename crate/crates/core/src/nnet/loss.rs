use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn rows<T: Scalar>(logits: &Tensor<T>) -> Result<(usize, usize)> {
    logits.expect_rank(2, "log_softmax")?;
    let (b, k) = (logits.shape()[0], logits.shape()[1]);
    if k == 0 {
        return Err(Error::shape("log_softmax needs at least one class"));
    }
    Ok((b, k))
}

/// Row-wise log-softmax of `[batch, classes]`, computed in f64.
pub fn log_softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = rows(logits)?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(k) {
        let m = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v.as_f64() - m).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| T::lit(v.as_f64() - lse)));
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Gradient through log-softmax: `dx = dy - softmax * sum(dy)`.
pub fn log_softmax_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = rows(output)?;
    if grad.shape() != output.shape() {
        return Err(Error::shape("log_softmax gradient shape mismatch"));
    }
    let mut dx = Vec::with_capacity(output.len());
    for (o, g) in output.data().chunks(k).zip(grad.data().chunks(k)) {
        let s: f64 = g.iter().map(|v| v.as_f64()).sum();
        dx.extend(
            o.iter()
                .zip(g)
                .map(|(o, g)| T::lit(g.as_f64() - o.as_f64().exp() * s)),
        );
    }
    Tensor::new(output.shape().to_vec(), dx)
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let (b, k) = rows(logits)?;
    if labels.len() != b || b == 0 {
        return Err(Error::shape(format!(
            "softmax_xent got {} labels for a batch of {b}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::shape(format!("label {bad} out of range for {k} classes")));
    }
    let lp = log_softmax(logits)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &y) in lp.data().chunks(k).zip(labels) {
        loss -= row[y].as_f64();
        for (c, v) in row.iter().enumerate() {
            let target = if c == y { 1.0 } else { 0.0 };
            grad.push(T::lit((v.as_f64().exp() - target) / b as f64));
        }
    }
    Ok((loss / b as f64, Tensor::new(logits.shape().to_vec(), grad)?))
}
