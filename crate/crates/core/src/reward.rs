//! Per-request utility: a task-by-tier quality matrix scaled by a deadline
//! weight that is binary for hard deadlines and decays for soft ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadlineKind {
    Hard,
    Soft,
}

/// A task with its latency requirement, serialized as
/// `[name, deadline_ms_per_token, kind]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, f64, DeadlineKind)", into = "(String, f64, DeadlineKind)")]
pub struct TaskSpec {
    pub name: String,
    pub deadline_ms_per_token: f64,
    pub kind: DeadlineKind,
}

impl From<(String, f64, DeadlineKind)> for TaskSpec {
    fn from((name, deadline_ms_per_token, kind): (String, f64, DeadlineKind)) -> Self {
        Self { name, deadline_ms_per_token, kind }
    }
}

impl From<TaskSpec> for (String, f64, DeadlineKind) {
    fn from(t: TaskSpec) -> Self {
        (t.name, t.deadline_ms_per_token, t.kind)
    }
}

pub const DEFAULT_DEADLINE_MS_PER_TOKEN: f64 = 40.0;
pub const DEFAULT_DECAY_PER_MS: f64 = 0.01;
pub const DEFAULT_CUTOFF_FRACTION: f64 = 0.10;

/// Zero-shot accuracies normalized to the largest model, columns ordered
/// 125M, 1.3B, 6.7B.
pub const DEFAULT_TASKS: [(&str, [f64; 3]); 4] = [
    ("HellaSwag", [0.45, 0.78, 1.00]),
    ("COPA", [0.80, 0.95, 1.00]),
    ("PIQA", [0.82, 0.96, 1.00]),
    ("OpenBookQA", [0.70, 0.94, 1.00]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub tasks: Vec<TaskSpec>,
    /// Rows in task order, columns smallest to largest tier.
    pub reward_matrix: Vec<Vec<f64>>,
    #[serde(default = "default_decay")]
    pub decay_per_ms: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff_fraction: f64,
}

fn default_decay() -> f64 {
    DEFAULT_DECAY_PER_MS
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF_FRACTION
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            tasks: DEFAULT_TASKS
                .iter()
                .map(|(name, _)| TaskSpec {
                    name: name.to_string(),
                    deadline_ms_per_token: DEFAULT_DEADLINE_MS_PER_TOKEN,
                    kind: DeadlineKind::Hard,
                })
                .collect(),
            reward_matrix: DEFAULT_TASKS.iter().map(|(_, row)| row.to_vec()).collect(),
            decay_per_ms: DEFAULT_DECAY_PER_MS,
            cutoff_fraction: DEFAULT_CUTOFF_FRACTION,
        }
    }
}

impl RewardSpec {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn num_tiers(&self) -> usize {
        self.reward_matrix.first().map_or(0, Vec::len)
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn utility(&self, task_id: usize, tier_id: usize) -> f64 {
        self.reward_matrix[task_id][tier_id]
    }

    /// Same spec with every task switched to `kind`.
    pub fn with_kind(&self, kind: DeadlineKind) -> Self {
        let mut out = self.clone();
        for t in &mut out.tasks {
            t.kind = kind;
        }
        out
    }

    /// Hard errors and soft warnings (rows whose largest-tier entry is not 1).
    pub fn check(&self, num_tiers: usize) -> (Vec<String>, Vec<String>) {
        let mut errs = Vec::new();
        let mut warns = Vec::new();
        if self.tasks.is_empty() {
            errs.push("reward.tasks must not be empty".to_string());
        }
        if self.reward_matrix.len() != self.tasks.len() {
            errs.push(format!(
                "reward.reward_matrix has {} rows for {} tasks",
                self.reward_matrix.len(),
                self.tasks.len()
            ));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if !(t.deadline_ms_per_token > 0.0 && t.deadline_ms_per_token.is_finite()) {
                errs.push(format!("reward.tasks[{i}] ({}): deadline must be positive", t.name));
            }
        }
        for (i, row) in self.reward_matrix.iter().enumerate() {
            if row.len() != num_tiers {
                errs.push(format!("reward.reward_matrix[{i}] has {} entries for {num_tiers} tiers", row.len()));
                continue;
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                errs.push(format!("reward.reward_matrix[{i}] entries must lie in [0, 1]"));
            }
            if row.last() != Some(&1.0) {
                warns.push(format!("reward.reward_matrix[{i}] largest-tier entry is not 1.0"));
            }
        }
        if !(self.decay_per_ms > 0.0 && self.decay_per_ms <= 1.0) {
            errs.push("reward.decay_per_ms must lie in (0, 1]".to_string());
        }
        if !(self.cutoff_fraction > 0.0 && self.cutoff_fraction <= 1.0) {
            errs.push("reward.cutoff_fraction must lie in (0, 1]".to_string());
        }
        (errs, warns)
    }
}

/// 1 when the deadline is met (inclusive), else 0.
pub fn weight_hard(realized_ms_per_token: f64, deadline: f64) -> f64 {
    if realized_ms_per_token <= deadline {
        1.0
    } else {
        0.0
    }
}

/// Linear decay of `decay_per_ms` per ms of excess, up to and including an
/// excess of `cutoff_fraction * deadline`; zero beyond.
pub fn weight_soft(realized_ms_per_token: f64, deadline: f64, decay_per_ms: f64, cutoff_fraction: f64) -> f64 {
    let excess = (realized_ms_per_token - deadline).max(0.0);
    if excess == 0.0 {
        1.0
    } else if excess <= cutoff_fraction * deadline {
        (1.0 - decay_per_ms * excess).max(0.0)
    } else {
        0.0
    }
}

impl RewardSpec {
    pub fn weight(&self, task_id: usize, realized_ms_per_token: f64) -> f64 {
        let task = &self.tasks[task_id];
        match task.kind {
            DeadlineKind::Hard => weight_hard(realized_ms_per_token, task.deadline_ms_per_token),
            DeadlineKind::Soft => weight_soft(
                realized_ms_per_token,
                task.deadline_ms_per_token,
                self.decay_per_ms,
                self.cutoff_fraction,
            ),
        }
    }
}

/// Deadline weight times the task/tier utility.
pub fn request_reward(task_id: usize, tier_id: usize, realized_ms_per_token: f64, spec: &RewardSpec) -> Result<f64> {
    if task_id >= spec.num_tasks() {
        return Err(Error::InvalidParameter(format!("unknown task {task_id}")));
    }
    if tier_id >= spec.reward_matrix[task_id].len() {
        return Err(Error::InvalidParameter(format!("unknown tier {tier_id}")));
    }
    Ok(spec.weight(task_id, realized_ms_per_token) * spec.utility(task_id, tier_id))
}
