//! The router's value function and how it sees the cluster.

mod checkpoint;
mod network;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use network::{argmax, q_gradient, BatchScratch, LossKind, QNetwork, DEFAULT_HIDDEN};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ClusterSpec;

/// What the router conditions on for one routing decision.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterState {
    pub task_id: usize,
    pub num_tasks: usize,
    /// Active plus queued requests per tier.
    pub tier_batches: Vec<usize>,
    /// Requests per second.
    pub arrival_rate: f64,
}

/// Input normalization constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateEncoding {
    pub rate_scale: f64,
    /// One per tier; defaults to each tier's shared-memory batch limit.
    pub batch_scale: Vec<f64>,
}

pub const DEFAULT_RATE_SCALE: f64 = 48.0;

impl StateEncoding {
    pub fn for_cluster(cluster: &ClusterSpec) -> Self {
        Self {
            rate_scale: DEFAULT_RATE_SCALE,
            batch_scale: cluster.tiers.iter().map(|t| t.max_batch as f64).collect(),
        }
    }

    pub fn num_tiers(&self) -> usize {
        self.batch_scale.len()
    }

    pub fn input_dim(&self, num_tasks: usize) -> usize {
        num_tasks + self.batch_scale.len() + 1
    }

    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.rate_scale > 0.0 && self.rate_scale.is_finite()) {
            errs.push("encoding.rate_scale must be positive".to_string());
        }
        if self.batch_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            errs.push("encoding.batch_scale entries must be positive".to_string());
        }
        errs
    }

    /// Writes `[one_hot(task), batches / batch_scale, rate / rate_scale]`
    /// into `out`, which must be exactly `num_tasks + M + 1` long.
    pub fn encode_into(
        &self,
        task_id: usize,
        num_tasks: usize,
        tier_batches: &[usize],
        arrival_rate: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let m = self.batch_scale.len();
        if tier_batches.len() != m {
            return Err(Error::Dimension(format!("{} tier batches for {m} tiers", tier_batches.len())));
        }
        if task_id >= num_tasks {
            return Err(Error::InvalidInput(format!("task {task_id} out of range for {num_tasks} tasks")));
        }
        if out.len() != num_tasks + m + 1 {
            return Err(Error::Dimension(format!("encoding buffer of {} for input dim {}", out.len(), num_tasks + m + 1)));
        }
        out[..num_tasks].fill(0.0);
        out[task_id] = 1.0;
        for (k, (&b, &s)) in tier_batches.iter().zip(&self.batch_scale).enumerate() {
            out[num_tasks + k] = b as f64 / s;
        }
        out[num_tasks + m] = arrival_rate / self.rate_scale;
        Ok(())
    }

    pub fn encode(&self, state: &RouterState) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.input_dim(state.num_tasks)];
        self.encode_into(state.task_id, state.num_tasks, &state.tier_batches, state.arrival_rate, &mut out)?;
        Ok(out)
    }
}

/// Epsilon-greedy choice: uniform with probability `epsilon`, else the
/// greedy action (lowest index on ties).
pub fn select_action<R: Rng + ?Sized>(net: &QNetwork, encoded: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.outputs()));
    }
    let q = net.forward(encoded)?;
    Ok(argmax(&q))
}
