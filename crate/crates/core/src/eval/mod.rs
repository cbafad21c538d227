//! Replaying traces through the simulator under a router, and the metrics
//! computed over the resulting per-request records.

mod io;
mod metrics;
mod scenario;

pub use io::{write_metrics_csv, write_summary_csv, ScenarioSummary, METRICS_HEADER, SUMMARY_HEADER};
pub use metrics::{
    collapse_rate, hardware_utility, per_rate, running_avg, selection_distribution, threshold_counts, trial_band,
    windowed, RateSummary, SelectionDistribution, ThresholdCounts, TrialBand, TABLE_THRESHOLDS, WINDOW,
};
pub use scenario::{scenario, scenario_names, Scenario, WorkloadKind, STABLE_HOLD_S, STABLE_RATES};

use crate::error::{Error, Result};
use crate::policy::{argmax, QNetwork, StateEncoding};
use crate::reward::{request_reward, RewardSpec};
use crate::sim::{ClusterSpec, Request, Simulator};
use crate::workload::{EstimatorSpec, RateMode, WorkloadTrace};

/// How each arrival is routed.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Greedy argmax of a trained network.
    Greedy(QNetwork),
    /// Every request to one tier, on a cluster whose tiers own all memory.
    Static(usize),
}

impl Policy {
    pub fn label(&self) -> String {
        match self {
            Policy::Greedy(_) => "policy".to_string(),
            Policy::Static(t) => format!("static:{t}"),
        }
    }
}

/// Everything besides the trace that an evaluation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSetup {
    pub cluster: ClusterSpec,
    pub reward: RewardSpec,
    pub encoding: StateEncoding,
    pub estimator: EstimatorSpec,
    pub rate_mode: RateMode,
    /// Start every trace segment on an idle cluster.
    pub reset_per_segment: bool,
}

impl EvalSetup {
    pub fn new(cluster: ClusterSpec, reward: RewardSpec) -> Self {
        let encoding = StateEncoding::for_cluster(&cluster);
        Self {
            cluster,
            reward,
            encoding,
            estimator: EstimatorSpec::default(),
            rate_mode: RateMode::Estimated,
            reset_per_segment: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub request_index: usize,
    pub arrival_ms: f64,
    pub task_id: usize,
    pub tier_id: usize,
    pub reward: f64,
    pub realized_ms_per_token: f64,
    pub segment_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub records: Vec<EvalRecord>,
    pub policy: String,
    pub gpu_count: usize,
    pub seed: u64,
}

impl EvalRun {
    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.reward).sum::<f64>() / self.records.len() as f64
    }
}

/// Replays `trace` with `policy`. Static baselines run on
/// [`ClusterSpec::for_static_baseline`]; the network is only ever used
/// greedily. `seed` is recorded for provenance, since replay itself is
/// deterministic.
pub fn run_eval(policy: &Policy, trace: &WorkloadTrace, setup: &EvalSetup, seed: u64) -> Result<EvalRun> {
    let num_tasks = setup.reward.num_tasks();
    let num_tiers = setup.cluster.num_tiers();
    let mut errs = setup.cluster.validation_errors();
    errs.extend(setup.reward.check(num_tiers).0);
    errs.extend(setup.encoding.validation_errors());
    if setup.encoding.num_tiers() != num_tiers {
        errs.push("encoding tier count differs from cluster".to_string());
    }
    match policy {
        Policy::Greedy(net) => {
            let want = setup.encoding.input_dim(num_tasks);
            if net.input_dim() != want || net.outputs() != num_tiers {
                errs.push(format!(
                    "policy network is {}->{}, system needs {want}->{num_tiers}",
                    net.input_dim(),
                    net.outputs()
                ));
            }
        }
        Policy::Static(t) if *t >= num_tiers => errs.push(format!("static tier {t} out of range")),
        Policy::Static(_) => {}
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    trace.validate(num_tasks)?;

    let cluster = match policy {
        Policy::Static(_) => setup.cluster.for_static_baseline(),
        Policy::Greedy(_) => setup.cluster.clone(),
    };
    let rates = trace.event_rates();
    let mut starts = vec![false; trace.len()];
    if setup.reset_per_segment {
        for r in trace.segment_ranges().into_iter().skip(1) {
            if r.start < starts.len() {
                starts[r.start] = true;
            }
        }
    }

    let mut estimator = setup.estimator.build(setup.rate_mode)?;
    let mut sim = Simulator::new(cluster.clone())?;
    let mut offset = 0.0;
    let mut records: Vec<Option<EvalRecord>> = vec![None; trace.len()];
    let mut done: Vec<Request> = Vec::new();
    let mut enc = vec![0.0; setup.encoding.input_dim(num_tasks)];
    let (mut hidden, mut q) = match policy {
        Policy::Greedy(net) => (vec![0.0; net.hidden()], vec![0.0; num_tiers]),
        Policy::Static(_) => (Vec::new(), Vec::new()),
    };

    let settle = |done: &mut Vec<Request>, records: &mut Vec<Option<EvalRecord>>| -> Result<()> {
        for req in done.drain(..) {
            let i = req.id as usize;
            let realized = req.realized();
            records[i] = Some(EvalRecord {
                request_index: i,
                arrival_ms: trace.events[i].time_ms,
                task_id: req.task_id,
                tier_id: req.tier_id,
                reward: request_reward(req.task_id, req.tier_id, realized, &setup.reward)?,
                realized_ms_per_token: realized,
                segment_rate: rates[i],
            });
        }
        Ok(())
    };

    for (i, ev) in trace.events.iter().enumerate() {
        if starts[i] {
            done.extend(sim.drain());
            settle(&mut done, &mut records)?;
            sim = Simulator::new(cluster.clone())?;
            offset = ev.time_ms;
            estimator.reset();
        }
        sim.advance_into(ev.time_ms - offset, &mut done);
        settle(&mut done, &mut records)?;
        let rate = estimator.observe(ev.time_ms, rates[i])?;
        let tier = match policy {
            Policy::Static(t) => *t,
            Policy::Greedy(net) => {
                setup.encoding.encode_into(ev.task_id, num_tasks, sim.observe(), rate, &mut enc)?;
                net.forward_into(&enc, &mut hidden, &mut q)?;
                argmax(&q)
            }
        };
        sim.submit(i as u64, ev.task_id, tier)?;
    }
    done.extend(sim.drain());
    settle(&mut done, &mut records)?;

    let records = records
        .into_iter()
        .map(|r| r.ok_or_else(|| Error::InvalidInput("request never completed".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalRun { records, policy: policy.label(), gpu_count: cluster.gpu_count, seed })
}
