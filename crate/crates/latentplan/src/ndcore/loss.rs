//! Loss functions. Probabilities are floored to [1e-7, 1-1e-7] inside the
//! logarithms.

use crate::error::{Error, Result};
use crate::ndcore::layers::kl_to_uniform;
use crate::ndcore::tensor::Tensor;

const P_FLOOR: f64 = 1e-7;

fn clamp_p(p: f32) -> f64 {
    (p as f64).clamp(P_FLOOR, 1.0 - P_FLOOR)
}

/// Mean binary cross-entropy over all elements.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            expected: target.shape_string(),
            actual: pred.shape_string(),
        });
    }
    let mut acc = 0.0f64;
    for (p, t) in pred.data().iter().zip(target.data()) {
        let p = clamp_p(*p);
        let t = *t as f64;
        acc -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    Ok(acc / pred.len() as f64)
}

/// Mean binary cross-entropy and its gradient with respect to `pred`.
pub fn bce_loss_grad(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let loss = bce_loss(pred, target)?;
    let n = pred.len() as f64;
    let grad: Vec<f32> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let p = clamp_p(*p);
            (((p - *t as f64) / (p * (1.0 - p))) / n) as f32
        })
        .collect();
    Ok((loss, Tensor::new(pred.shape().to_vec(), grad)))
}

/// Sum over rows of KL(row || uniform) for a stack of probability rows.
/// The row width is the trailing extent of `q`.
pub fn gs_variational_loss(q: &Tensor) -> f64 {
    let cats = match q.shape().last() {
        Some(&c) if c > 0 => c,
        _ => return 0.0,
    };
    q.data().chunks(cats).map(kl_to_uniform).sum()
}
