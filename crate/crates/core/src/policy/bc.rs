use serde::{Deserialize, Serialize};

use super::log_softmax;
use super::network::PolicyParams;
use super::optim::Adam;
use crate::error::{Error, Result};

/// Imitation batch; `inputs` is `len x input_dim` row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BcBatch {
    pub inputs: Vec<f64>,
    pub actions: Vec<usize>,
    /// Monte Carlo return targets for the value head, when regressing.
    pub returns: Option<Vec<f64>>,
    /// Per-sample loss weights; plain mean when absent.
    pub weights: Option<Vec<f64>>,
}

impl BcBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn check(&self, input_dim: usize) -> Result<()> {
        let n = self.len();
        let ok = self.inputs.len() == n * input_dim
            && self.returns.as_ref().is_none_or(|r| r.len() == n)
            && self.weights.as_ref().is_none_or(|w| w.len() == n);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "bc batch of {n} actions with {} input values",
                self.inputs.len()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BcStats {
    /// Mean `-ln pi(a|s)` over the batch before the step.
    pub loss: f64,
    /// Mean squared value error before the step; zero unless regressing.
    pub value_loss: f64,
    pub batch_size: usize,
}

fn accumulate(params: &PolicyParams, batch: &BcBatch, mut grad: Option<&mut [f64]>) -> (f64, f64) {
    let n_in = params.dims().input;
    let scale = 1.0 / batch.len() as f64;
    let mut nll = 0.0;
    let mut mse = 0.0;
    let mut d_logits = vec![0.0; params.dims().actions];
    for (i, &a) in batch.actions.iter().enumerate() {
        let x = &batch.inputs[i * n_in..(i + 1) * n_in];
        let w = batch.weights.as_ref().map_or(1.0, |w| w[i]) * scale;
        let cache = params.forward_cached(x);
        let logp = log_softmax(&cache.logits);
        nll -= logp[a] * w;
        let err = batch.returns.as_ref().map_or(0.0, |r| cache.value - r[i]);
        mse += err * err * w;
        if let Some(g) = grad.as_deref_mut() {
            for (k, d) in d_logits.iter_mut().enumerate() {
                let onehot = if k == a { 1.0 } else { 0.0 };
                *d = (logp[k].exp() - onehot) * w;
            }
            params.backward(x, &cache, &d_logits, 2.0 * err * w, g);
        }
    }
    (nll, mse)
}

/// Behavior-cloning loss: mean negative log-likelihood of the batch actions,
/// plus the mean squared value error when return targets are present.
pub fn bc_loss(params: &PolicyParams, batch: &BcBatch) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let (nll, mse) = accumulate(params, batch, None);
    nll + mse
}

pub fn bc_loss_and_grad(params: &PolicyParams, batch: &BcBatch) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.as_slice().len()];
    if batch.is_empty() {
        return (0.0, grad);
    }
    let (nll, mse) = accumulate(params, batch, Some(&mut grad));
    (nll + mse, grad)
}

/// One Adam step on the imitation loss. An empty batch leaves everything
/// untouched. Without return targets the critic head gets no gradient.
pub fn bc_update(
    params: &mut PolicyParams,
    opt: &mut Adam,
    batch: &BcBatch,
    lr: f64,
) -> Result<BcStats> {
    if batch.is_empty() {
        return Ok(BcStats::default());
    }
    batch.check(params.dims().input)?;
    let mut grad = vec![0.0; params.as_slice().len()];
    let (nll, mse) = accumulate(params, batch, Some(&mut grad));
    if !(nll + mse).is_finite() {
        return Err(Error::NonFinite(format!(
            "bc loss (nll {nll:.4e}, value {mse:.4e})"
        )));
    }
    opt.step(params.as_mut_slice(), &grad, lr);
    Ok(BcStats {
        loss: nll,
        value_loss: mse,
        batch_size: batch.len(),
    })
}
