use crate::error::{Error, Result};
use crate::policy::StateEncoding;
use crate::reward::{DeadlineKind, RewardSpec};
use crate::sim::ClusterSpec;
use crate::workload::{
    gen_stable, gen_unpredictable_request_based, gen_unpredictable_time_based, EstimatorSpec, RateMode, TaskMix,
    WorkloadTrace, UNPREDICTABLE_REQUESTS,
};

use super::{EvalSetup, Policy};

/// Arrival rates of the stable sweep, req/s.
pub const STABLE_RATES: [f64; 19] =
    [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 20.0, 24.0, 28.0, 32.0, 36.0, 40.0, 44.0, 48.0];

/// Seconds each stable-sweep rate is held.
pub const STABLE_HOLD_S: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadKind {
    Stable { rates: Vec<f64>, hold_s: f64 },
    /// Bursty bands with time-scaled segment lengths.
    UnpredictableTime { requests: usize },
    /// Uniform rates held for about 500 requests.
    UnpredictableRequest { requests: usize },
}

/// A ready-to-run evaluation setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub workload: WorkloadKind,
    pub tasks: TaskMix,
    pub reward: RewardSpec,
    /// Cluster for static baselines.
    pub cluster: ClusterSpec,
    /// Cluster the learned router runs on.
    pub policy_cluster: ClusterSpec,
    pub rate_mode: RateMode,
    pub reset_per_segment: bool,
}

impl Scenario {
    pub fn generate(&self, seed: u64) -> Result<WorkloadTrace> {
        match &self.workload {
            WorkloadKind::Stable { rates, hold_s } => gen_stable(rates, *hold_s, &self.tasks, seed),
            WorkloadKind::UnpredictableTime { requests } => gen_unpredictable_time_based(*requests, &self.tasks, seed),
            WorkloadKind::UnpredictableRequest { requests } => {
                gen_unpredictable_request_based(*requests, &self.tasks, seed)
            }
        }
    }

    /// Sweep rates when the workload is stable.
    pub fn rate_buckets(&self) -> Option<&[f64]> {
        match &self.workload {
            WorkloadKind::Stable { rates, .. } => Some(rates),
            _ => None,
        }
    }

    pub fn setup_for(&self, policy: &Policy, estimator: &EstimatorSpec) -> EvalSetup {
        let cluster = match policy {
            Policy::Greedy(_) => &self.policy_cluster,
            Policy::Static(_) => &self.cluster,
        };
        EvalSetup {
            cluster: cluster.clone(),
            reward: self.reward.clone(),
            // The router always sees batches scaled as during training.
            encoding: StateEncoding::for_cluster(&self.policy_cluster),
            estimator: *estimator,
            rate_mode: self.rate_mode,
            reset_per_segment: self.reset_per_segment,
        }
    }
}

fn slug(name: &str) -> String {
    name.to_ascii_lowercase()
}

/// Every name [`scenario`] accepts for the given task set.
pub fn scenario_names(reward: &RewardSpec) -> Vec<String> {
    let mut names: Vec<String> = ["stable-sweep", "unpredictable-1", "unpredictable-2"].map(String::from).to_vec();
    names.extend(reward.tasks.iter().map(|t| format!("single-task-{}", slug(&t.name))));
    names.extend(["hellaswag-copa-soft", "different-deadlines", "hw-utility-8gpu"].map(String::from));
    names
}

fn task(reward: &RewardSpec, name: &str) -> Result<usize> {
    reward
        .tasks
        .iter()
        .position(|t| slug(&t.name) == slug(name))
        .ok_or_else(|| Error::UnknownScenario(format!("scenario needs task {name}")))
}

/// Builds a named scenario on top of a base system.
pub fn scenario(name: &str, cluster: &ClusterSpec, reward: &RewardSpec) -> Result<Scenario> {
    let stable = WorkloadKind::Stable { rates: STABLE_RATES.to_vec(), hold_s: STABLE_HOLD_S };
    let unpredictable_1 = WorkloadKind::UnpredictableTime { requests: UNPREDICTABLE_REQUESTS };
    let mut s = Scenario {
        name: name.to_string(),
        workload: stable,
        tasks: TaskMix::uniform(reward.num_tasks()),
        reward: reward.clone(),
        cluster: cluster.clone(),
        policy_cluster: cluster.clone(),
        rate_mode: RateMode::TrueRate,
        reset_per_segment: true,
    };
    let unpredictable = |s: &mut Scenario, w: WorkloadKind| {
        s.workload = w;
        s.rate_mode = RateMode::Estimated;
        s.reset_per_segment = false;
    };
    match name {
        "stable" | "stable-sweep" => s.name = "stable-sweep".into(),
        "unpredictable-1" => unpredictable(&mut s, unpredictable_1),
        "unpredictable-2" => {
            unpredictable(&mut s, WorkloadKind::UnpredictableRequest { requests: UNPREDICTABLE_REQUESTS })
        }
        "hellaswag-copa-soft" => {
            unpredictable(&mut s, unpredictable_1);
            s.tasks = TaskMix::only(vec![task(reward, "HellaSwag")?, task(reward, "COPA")?])?;
            s.reward = reward.with_kind(DeadlineKind::Soft);
        }
        "different-deadlines" => {
            let obqa = task(reward, "OpenBookQA")?;
            let copa = task(reward, "COPA")?;
            s.reward.tasks[obqa].deadline_ms_per_token = 80.0;
            s.reward.tasks[copa].deadline_ms_per_token = 32.0;
        }
        "hw-utility-8gpu" => {
            unpredictable(&mut s, unpredictable_1);
            let large = cluster.largest_tier();
            s.cluster.tiers[large].replicas *= 2;
            s.cluster.gpu_count *= 2;
        }
        other => match other.strip_prefix("single-task-") {
            Some(t) => s.tasks = TaskMix::only(vec![task(reward, t).map_err(|_| Error::UnknownScenario(other.into()))?])?,
            None => return Err(Error::UnknownScenario(other.to_string())),
        },
    }
    Ok(s)
}
