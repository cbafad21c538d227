use std::io::Write;

use super::{EvalRun, RateSummary, ThresholdCounts};

pub const METRICS_HEADER: &str = "request_index,arrival_ms,task_id,tier_id,reward,realized_ms_per_token,segment_rate";
pub const SUMMARY_HEADER: &str = "policy,metric,key,value";

pub fn write_metrics_csv<W: Write>(run: &EvalRun, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in &run.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.request_index, r.arrival_ms, r.task_id, r.tier_id, r.reward, r.realized_ms_per_token, r.segment_rate
        )?;
    }
    Ok(())
}

/// Reductions of one policy's runs on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub policy: String,
    pub mean_reward: f64,
    pub mean_utility: f64,
    pub thresholds: ThresholdCounts,
    pub per_rate: Vec<RateSummary>,
    /// `(task name, tier name, usage)` when the workload is a rate sweep.
    pub riemann: Vec<(String, String, f64)>,
}

/// Long-format summary, one `policy,metric,key,value` row per number.
pub fn write_summary_csv<W: Write>(summaries: &[ScenarioSummary], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in summaries {
        let p = &s.policy;
        writeln!(out, "{p},mean_reward,,{}", s.mean_reward)?;
        writeln!(out, "{p},mean_utility,,{}", s.mean_utility)?;
        for (t, c) in s.thresholds.thresholds.iter().zip(&s.thresholds.at_least) {
            writeln!(out, "{p},windows_at_least,{t},{c}")?;
        }
        writeln!(out, "{p},windows_perfect,1,{}", s.thresholds.perfect)?;
        for r in &s.per_rate {
            writeln!(out, "{p},rate_mean_reward,{},{}", r.rate, r.mean_reward)?;
            writeln!(out, "{p},rate_miss_fraction,{},{}", r.rate, r.miss_fraction)?;
        }
        for (task, tier, u) in &s.riemann {
            writeln!(out, "{p},riemann_usage,{task}/{tier},{u}")?;
        }
    }
    Ok(())
}
