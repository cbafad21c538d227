use crate::error::{Error, Result};
use crate::policy::{argmax, BatchScratch, QNetwork};

use super::replay::SampleBatch;

/// `y = r + c * gamma * Q_target(s')[argmax_a Q_online(s')[a]]` per row,
/// reusing caller-provided scratch space.
pub fn double_q_targets_into(
    online: &QNetwork,
    target: &QNetwork,
    batch: &SampleBatch,
    discount: f64,
    online_scratch: &mut BatchScratch,
    target_scratch: &mut BatchScratch,
    out: &mut Vec<f64>,
) {
    let rows = batch.len();
    let m = online.outputs();
    online.forward_batch(&batch.next_states, rows, online_scratch);
    target.forward_batch(&batch.next_states, rows, target_scratch);
    out.clear();
    for i in 0..rows {
        let best = argmax(&online_scratch.q()[i * m..(i + 1) * m]);
        let bootstrap = target_scratch.q()[i * m + best];
        out.push(batch.rewards[i] + batch.continues[i] * discount * bootstrap);
    }
}

/// Double Q-learning regression targets for a batch.
pub fn td_targets_double_q(
    online: &QNetwork,
    target: &QNetwork,
    batch: &SampleBatch,
    discount: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if online.params().iter().chain(target.params()).any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("network parameters"));
    }
    if batch.next_states.len() != batch.len() * online.input_dim() {
        return Err(Error::Dimension("next-state width differs from network input".into()));
    }
    let mut out = Vec::with_capacity(batch.len());
    double_q_targets_into(
        online,
        target,
        batch,
        discount,
        &mut BatchScratch::default(),
        &mut BatchScratch::default(),
        &mut out,
    );
    Ok(out)
}
