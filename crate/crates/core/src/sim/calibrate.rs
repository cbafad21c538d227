use super::{ClusterSpec, Simulator};
use crate::error::Result;
use crate::rng::splitmix64;
use crate::workload::{gen_stable, TaskMix, WorkloadTrace};

/// Static-serving deadline-miss fractions over a rate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub rates: Vec<f64>,
    /// `miss_fraction[tier][k]` at `rates[k]`.
    pub miss_fraction: Vec<Vec<f64>>,
    /// Lowest swept rate where more than half the deadlines were missed.
    pub collapse_rate: Vec<Option<f64>>,
}

/// Serves every arrival of `trace` on `tier_id` of `cluster` (as given, no
/// baseline adjustment) and returns the fraction with realized latency above
/// `deadline_ms_per_token`.
pub fn miss_fraction(
    cluster: &ClusterSpec,
    tier_id: usize,
    trace: &WorkloadTrace,
    deadline_ms_per_token: f64,
) -> Result<f64> {
    if trace.is_empty() {
        return Ok(0.0);
    }
    let mut sim = Simulator::new(cluster.clone())?;
    let mut done = Vec::with_capacity(trace.len());
    for (id, ev) in trace.events.iter().enumerate() {
        sim.advance_into(ev.time_ms, &mut done);
        sim.submit(id as u64, ev.task_id, tier_id)?;
    }
    done.extend(sim.drain());
    let missed = done.iter().filter(|r| r.realized() > deadline_ms_per_token).count();
    Ok(missed as f64 / done.len() as f64)
}

/// Runs each tier as a static baseline (whole-memory batch limits) at every
/// rate of `rates`, holding each for `hold_seconds` on a fresh cluster.
pub fn calibrate_defaults(
    cluster: &ClusterSpec,
    deadline_ms_per_token: f64,
    rates: &[f64],
    hold_seconds: f64,
    seed: u64,
) -> Result<CalibrationReport> {
    let baseline = cluster.for_static_baseline();
    let mut traces = Vec::with_capacity(rates.len());
    for (k, &rate) in rates.iter().enumerate() {
        traces.push(gen_stable(&[rate], hold_seconds, &TaskMix::uniform(1), splitmix64(seed ^ k as u64))?);
    }
    let mut miss = Vec::with_capacity(baseline.num_tiers());
    let mut collapse = Vec::with_capacity(baseline.num_tiers());
    for tier in 0..baseline.num_tiers() {
        let row = traces
            .iter()
            .map(|t| miss_fraction(&baseline, tier, t, deadline_ms_per_token))
            .collect::<Result<Vec<_>>>()?;
        collapse.push(rates.iter().zip(&row).find(|(_, &m)| m > 0.5).map(|(&r, _)| r));
        miss.push(row);
    }
    Ok(CalibrationReport { rates: rates.to_vec(), miss_fraction: miss, collapse_rate: collapse })
}
