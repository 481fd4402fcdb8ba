//! Dense and residual Q-networks with hand-written backpropagation.

mod adam;
pub mod checkpoint;
mod layers;
mod model;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layers::{dense_forward, resblock_forward, Activation, Dense, DenseGrad};
pub use model::{Architecture, Gradients, Model, Trace};
pub use tensor::Matrix;

use crate::error::{Error, Result};

/// Mean of squared differences over every element.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    let n = pred.data().len().max(1) as f64;
    Ok(pred.data().iter().zip(target.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n)
}

/// `target <- (1 - tau) target + tau pred`, parameter by parameter.
pub fn soft_update(target: &mut Model, pred: &Model, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("blend factor {tau} outside [0, 1]")));
    }
    if target.architecture() != pred.architecture() {
        return Err(Error::Shape("soft update between different architectures".into()));
    }
    for (t, p) in target.layers_mut().iter_mut().zip(pred.layers()) {
        let blend = |a: &mut f64, b: f64| *a = (1.0 - tau) * *a + tau * b;
        t.w.data_mut().iter_mut().zip(p.w.data()).for_each(|(a, &b)| blend(a, b));
        t.b.iter_mut().zip(&p.b).for_each(|(a, &b)| blend(a, b));
    }
    Ok(())
}
