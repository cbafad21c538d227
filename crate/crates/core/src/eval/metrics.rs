use crate::error::{Error, Result};
use crate::reward::RewardSpec;

use super::EvalRun;

/// Trailing window length of the windowed performance metrics.
pub const WINDOW: usize = 20;

/// Thresholds reported for windowed performance, in descending order.
pub const TABLE_THRESHOLDS: [f64; 4] = [0.99, 0.98, 0.96, 0.94];

// Window means are formed from 20 rewards of the form u·w, so a window that
// "meets" a threshold can land a few ulps below it.
const THRESHOLD_SLACK: f64 = 1e-9;

/// Cumulative mean: entry `n` is the mean of the first `n + 1` rewards.
pub fn running_avg(rewards: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    rewards
        .iter()
        .enumerate()
        .map(|(i, r)| {
            sum += r;
            sum / (i + 1) as f64
        })
        .collect()
}

/// Trailing means over `window` rewards. Entry `k` covers rewards
/// `k..k + window`, so the first value belongs to request index
/// `window - 1`. Each window is summed directly rather than by a sliding
/// update so that a window of exact ones is exactly one.
pub fn windowed(rewards: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidParameter("window must be >= 1".into()));
    }
    Ok(rewards.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCounts {
    pub thresholds: Vec<f64>,
    /// Windows whose mean is at least each threshold.
    pub at_least: Vec<usize>,
    /// Windows whose mean is exactly 1.
    pub perfect: usize,
}

pub fn threshold_counts(windowed: &[f64], thresholds: &[f64]) -> Result<ThresholdCounts> {
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidParameter(format!("threshold {t} outside [0, 1]")));
    }
    let at_least = thresholds
        .iter()
        .map(|t| windowed.iter().filter(|v| **v >= t - THRESHOLD_SLACK).count())
        .collect();
    Ok(ThresholdCounts {
        thresholds: thresholds.to_vec(),
        at_least,
        perfect: windowed.iter().filter(|v| **v == 1.0).count(),
    })
}

/// Reward divided by GPU count, per request.
pub fn hardware_utility(rewards: &[f64], gpu_count: usize) -> Result<Vec<f64>> {
    if gpu_count == 0 {
        return Err(Error::InvalidParameter("gpu_count must be >= 1".into()));
    }
    Ok(rewards.iter().map(|r| r / gpu_count as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialBand {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
}

pub fn trial_band(runs: &[Vec<f64>]) -> Result<TrialBand> {
    if runs.len() < 2 {
        return Err(Error::InvalidInput("a trial band needs at least two runs".into()));
    }
    let n = runs[0].len();
    if runs.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("trial runs differ in length".into()));
    }
    let mut band = TrialBand { mean: Vec::with_capacity(n), std: Vec::with_capacity(n) };
    for i in 0..n {
        // Welford's update keeps identical trials at exactly zero spread.
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, r) in runs.iter().enumerate() {
            let delta = r[i] - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (r[i] - mean);
        }
        band.mean.push(mean);
        band.std.push((m2 / runs.len() as f64).sqrt());
    }
    Ok(band)
}

/// Outcome of one constant-rate stretch of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSummary {
    pub rate: f64,
    pub requests: usize,
    pub mean_reward: f64,
    /// Share of requests whose realized latency exceeded the task deadline.
    pub miss_fraction: f64,
}

/// Groups records by segment rate, ordered by rate.
pub fn per_rate(run: &EvalRun, reward: &RewardSpec) -> Vec<RateSummary> {
    let mut out: Vec<(RateSummary, f64)> = Vec::new();
    for r in &run.records {
        let idx = match out.iter().position(|(s, _)| s.rate == r.segment_rate) {
            Some(i) => i,
            None => {
                let blank = RateSummary { rate: r.segment_rate, requests: 0, mean_reward: 0.0, miss_fraction: 0.0 };
                out.push((blank, 0.0));
                out.len() - 1
            }
        };
        let (s, misses) = &mut out[idx];
        s.requests += 1;
        s.mean_reward += r.reward;
        if r.realized_ms_per_token > reward.tasks[r.task_id].deadline_ms_per_token {
            *misses += 1.0;
        }
    }
    let mut rows: Vec<RateSummary> = out
        .into_iter()
        .map(|(mut s, misses)| {
            s.mean_reward /= s.requests as f64;
            s.miss_fraction = misses / s.requests as f64;
            s
        })
        .collect();
    rows.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    rows
}

/// Lowest rate at which most deadlines are missed.
pub fn collapse_rate(rows: &[RateSummary]) -> Option<f64> {
    rows.iter().find(|r| r.miss_fraction > 0.5).map(|r| r.rate)
}

/// Tier selection frequencies per task and rate bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDistribution {
    pub buckets: Vec<f64>,
    pub num_tiers: usize,
    /// `counts[task][bucket][tier]`.
    pub counts: Vec<Vec<Vec<usize>>>,
}

impl SelectionDistribution {
    /// Share of `task`'s requests in `bucket` routed to `tier`; zero for an
    /// empty bucket.
    pub fn frequency(&self, task: usize, bucket: usize, tier: usize) -> f64 {
        let row = &self.counts[task][bucket];
        let total: usize = row.iter().sum();
        if total == 0 {
            0.0
        } else {
            row[tier] as f64 / total as f64
        }
    }

    /// Left-endpoint Riemann sum of the frequency curve over the bucket
    /// rates, in req/s.
    pub fn riemann_usage(&self, task: usize, tier: usize) -> f64 {
        self.buckets
            .windows(2)
            .enumerate()
            .map(|(b, w)| self.frequency(task, b, tier) * (w[1] - w[0]))
            .sum()
    }
}

/// Pools the runs' records into rate buckets. Every record's segment rate
/// must equal one of `buckets`, which must be strictly increasing.
pub fn selection_distribution(
    runs: &[EvalRun],
    buckets: &[f64],
    num_tasks: usize,
    num_tiers: usize,
) -> Result<SelectionDistribution> {
    if runs.is_empty() {
        return Err(Error::InvalidInput("no runs".into()));
    }
    if buckets.is_empty() || buckets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("buckets must be nonempty and strictly increasing".into()));
    }
    let mut counts = vec![vec![vec![0usize; num_tiers]; buckets.len()]; num_tasks];
    for r in runs.iter().flat_map(|run| &run.records) {
        let b = buckets
            .iter()
            .position(|b| *b == r.segment_rate)
            .ok_or_else(|| Error::InvalidInput(format!("rate {} is not a bucket", r.segment_rate)))?;
        if r.task_id >= num_tasks || r.tier_id >= num_tiers {
            return Err(Error::InvalidInput("record task or tier out of range".into()));
        }
        counts[r.task_id][b][r.tier_id] += 1;
    }
    Ok(SelectionDistribution { buckets: buckets.to_vec(), num_tiers, counts })
}
