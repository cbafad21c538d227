//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Every tolerance is pinned here.
//!
//! Trained policies are shared between criteria. Set
//! `BESTEFFORT_ACCEPTANCE_CACHE=<dir>` to keep them on disk between runs and
//! `BESTEFFORT_ACCEPTANCE_ONLY=7,8` to run a subset.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use besteffort::eval::{
    hardware_utility, per_rate, run_eval, scenario, selection_distribution, threshold_counts, windowed,
    write_metrics_csv, EvalRun, Policy, Scenario, TABLE_THRESHOLDS, WINDOW,
};
use besteffort::policy::{load_checkpoint, q_gradient, save_checkpoint, LossKind, QNetwork};
use besteffort::reward::{request_reward, weight_hard, weight_soft, DeadlineKind, RewardSpec, TaskSpec};
use besteffort::rng::rng_from_seed;
use besteffort::sim::{calibrate_defaults, ClusterSpec, ModelTierSpec};
use besteffort::trainer::{run_training, td_targets_double_q, SampleBatch, TrainConfig, TrainEnv, Transition};
use besteffort::workload::{
    gen_stable, gen_unpredictable_request_based, gen_unpredictable_time_based, read_trace, write_trace,
    EstimatorSpec, TaskMix, TrainingWorkloadSpec,
};
use rand::Rng;

// Tolerances.
const C4_INTERARRIVAL_REL: f64 = 0.02;
const C4_SIGMAS: f64 = 3.0;
const C4_SEGMENT_LEN_REL: f64 = 0.05;
const C2_REL_ERR: f64 = 1e-4;
const C5_COLLAPSE_RANGE: (f64, f64) = (2.0, 4.0);
const C5_SMALL_MAX_MISS: f64 = 0.01;
const C6_MIN_OPTIMAL: f64 = 0.95;
const C7_ENVELOPE: f64 = 0.05;
const C7_AVAILABILITY_FACTOR: f64 = 10.0;

const DESK_ITERATIONS: u64 = 200_000;
const FINE_TUNE_ITERATIONS: u64 = 100_000;
const DEGENERATE_ITERATIONS: u64 = 50_000;
const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Lazily trained policies, optionally persisted between runs.
struct Policies {
    cache_dir: Option<PathBuf>,
    nets: HashMap<String, QNetwork>,
}

impl Policies {
    fn get(&mut self, key: &str, train: impl FnOnce() -> QNetwork) -> QNetwork {
        if let Some(net) = self.nets.get(key) {
            return net.clone();
        }
        let path = self.cache_dir.as_ref().map(|d| d.join(format!("{key}.ckpt")));
        let net = match path.as_ref().filter(|p| p.exists()) {
            Some(p) => load_checkpoint(p, None).expect("cached checkpoint loads"),
            None => {
                let start = Instant::now();
                let net = train();
                eprintln!("    trained {key} in {:.0?}", start.elapsed());
                if let Some(p) = &path {
                    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
                    save_checkpoint(&net, p).unwrap();
                }
                net
            }
        };
        self.nets.insert(key.to_string(), net.clone());
        net
    }

    fn hard(&mut self, seed: u64) -> QNetwork {
        self.get(&format!("hard-{seed}"), || {
            let env = TrainEnv::new(ClusterSpec::default(), RewardSpec::default());
            let cfg = TrainConfig { total_iterations: DESK_ITERATIONS, seed, ..TrainConfig::default() };
            run_training(&env, &cfg).expect("training runs").network
        })
    }

    /// Trains the three hard-deadline seeds, concurrently when cores allow.
    fn hard_all(&mut self) -> Vec<QNetwork> {
        let missing: Vec<u64> = SEEDS.iter().copied().filter(|s| !self.nets.contains_key(&format!("hard-{s}"))).collect();
        let cached = |s: &u64| {
            self.cache_dir.as_ref().is_some_and(|d| d.join(format!("hard-{s}.ckpt")).exists())
        };
        let to_train: Vec<u64> = missing.iter().copied().filter(|s| !cached(s)).collect();
        let parallel = std::thread::available_parallelism().map_or(1, |n| n.get()) > 1;
        if parallel && to_train.len() > 1 {
            let start = Instant::now();
            let nets: Vec<(u64, QNetwork)> = std::thread::scope(|scope| {
                let handles: Vec<_> = to_train
                    .iter()
                    .map(|&seed| {
                        scope.spawn(move || {
                            let env = TrainEnv::new(ClusterSpec::default(), RewardSpec::default());
                            let cfg = TrainConfig { total_iterations: DESK_ITERATIONS, seed, ..TrainConfig::default() };
                            (seed, run_training(&env, &cfg).expect("training runs").network)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
            eprintln!("    trained {} seeds concurrently in {:.0?}", nets.len(), start.elapsed());
            for (seed, net) in nets {
                let key = format!("hard-{seed}");
                if let Some(d) = &self.cache_dir {
                    std::fs::create_dir_all(d).unwrap();
                    save_checkpoint(&net, &d.join(format!("{key}.ckpt"))).unwrap();
                }
                self.nets.insert(key, net);
            }
        }
        SEEDS.iter().map(|&s| self.hard(s)).collect()
    }

    fn soft(&mut self) -> QNetwork {
        let hard = self.hard(0);
        self.get("soft-0", || {
            let reward = RewardSpec::default().with_kind(DeadlineKind::Soft);
            let env = TrainEnv::new(ClusterSpec::default(), reward);
            let cfg = TrainConfig { total_iterations: FINE_TUNE_ITERATIONS, seed: 100, ..TrainConfig::fine_tune_defaults() };
            besteffort::trainer::fine_tune(hard, &env, &cfg).expect("fine-tune runs")
        })
    }

    fn different_deadlines(&mut self) -> QNetwork {
        self.get("deadlines-0", || {
            let sc = scenario("different-deadlines", &ClusterSpec::default(), &RewardSpec::default()).unwrap();
            let env = TrainEnv::new(ClusterSpec::default(), sc.reward);
            let cfg = TrainConfig { total_iterations: DESK_ITERATIONS, seed: 0, ..TrainConfig::default() };
            run_training(&env, &cfg).expect("training runs").network
        })
    }
}

fn base() -> (ClusterSpec, RewardSpec) {
    (ClusterSpec::default(), RewardSpec::default())
}

fn eval_on(sc: &Scenario, policy: &Policy, trace_seed: u64) -> EvalRun {
    let trace = sc.generate(trace_seed).unwrap();
    run_eval(policy, &trace, &sc.setup_for(policy, &EstimatorSpec::default()), trace_seed).unwrap()
}

// Seeds of the evaluation traces, disjoint from training seeds.
fn trace_seed(trial: usize) -> u64 {
    1_000 + trial as u64
}

// ---------------------------------------------------------------------------

/// Reference reward formulas, written out independently of the library.
fn reference_reward(utility: f64, kind: DeadlineKind, latency: f64, deadline: f64) -> f64 {
    let excess = latency - deadline;
    let w = if excess <= 0.0 {
        1.0
    } else {
        match kind {
            DeadlineKind::Hard => 0.0,
            DeadlineKind::Soft if excess <= 0.1 * deadline => 1.0 - 0.01 * excess,
            DeadlineKind::Soft => 0.0,
        }
    };
    utility * w
}

fn c1_reward_oracle() -> Outcome {
    let table = [
        ("HellaSwag", [0.45, 0.78, 1.0]),
        ("COPA", [0.80, 0.95, 1.0]),
        ("PIQA", [0.82, 0.96, 1.0]),
        ("OpenBookQA", [0.70, 0.94, 1.0]),
    ];
    let hard = RewardSpec::default();
    let mut mismatches = 0;
    for (t, (name, row)) in table.iter().enumerate() {
        if hard.tasks[t].name != *name || hard.reward_matrix[t] != row.to_vec() {
            mismatches += 1;
        }
    }
    let soft = hard.with_kind(DeadlineKind::Soft);
    let mut points = 0;
    for k in 0..10_000 {
        // 0 to 60 ms/token in steps of 0.006, covering both cliffs.
        let latency = k as f64 * 0.006;
        for deadline in [32.0, 40.0, 80.0] {
            if weight_hard(latency, deadline) != reference_reward(1.0, DeadlineKind::Hard, latency, deadline) {
                mismatches += 1;
            }
            if weight_soft(latency, deadline, 0.01, 0.1) != reference_reward(1.0, DeadlineKind::Soft, latency, deadline) {
                mismatches += 1;
            }
        }
        for (spec, kind) in [(&hard, DeadlineKind::Hard), (&soft, DeadlineKind::Soft)] {
            for (t, (_, row)) in table.iter().enumerate() {
                for (m, u) in row.iter().enumerate() {
                    let got = request_reward(t, m, latency, spec).unwrap();
                    if got != reference_reward(*u, kind, latency, 40.0) {
                        mismatches += 1;
                    }
                    points += 1;
                }
            }
        }
    }
    outcome(mismatches == 0, format!("{points} reward evaluations + quality-matrix lookups, {mismatches} mismatches"))
}

fn c2_gradient_check() -> Outcome {
    let mut rng = rng_from_seed(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let (i, h, o) = (rng.random_range(2..7), rng.random_range(3..12), rng.random_range(2..5));
        let net = QNetwork::new(i, h, o, &mut rng);
        let loss = if trial % 2 == 0 { LossKind::Huber } else { LossKind::Squared };
        let batch: Vec<(Vec<f64>, usize, f64)> = (0..6)
            .map(|_| {
                let x: Vec<f64> = (0..i).map(|_| rng.random_range(-1.0..1.0)).collect();
                (x, rng.random_range(0..o), rng.random_range(-2.5..2.5))
            })
            .collect();
        let (grad, _) = q_gradient(&net, &batch, loss).unwrap();
        let eps = 1e-6;
        let mut diff = 0.0;
        let mut norm = 0.0;
        for p in 0..net.params().len() {
            let mut plus = net.params().to_vec();
            plus[p] += eps;
            let mut minus = net.params().to_vec();
            minus[p] -= eps;
            let f = |params: Vec<f64>| {
                let n = QNetwork::from_params(i, h, o, params).unwrap();
                q_gradient(&n, &batch, loss).unwrap().1
            };
            let fd = (f(plus) - f(minus)) / (2.0 * eps);
            diff += (fd - grad[p]).powi(2);
            norm += grad[p].powi(2).max(fd.powi(2));
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-12));
    }
    outcome(worst < C2_REL_ERR, format!("worst relative error {worst:.2e} over 10 nets (limit {C2_REL_ERR:e})"))
}

fn c3_double_q_targets() -> Outcome {
    // Online argmax picks action 1 (value 3); the target net values action
    // 1 at 7; discount 0.99. Continuing rows: r + 0.99 * 7; terminal: r.
    let constant = |q: [f64; 3]| {
        let mut net = QNetwork::zeros(2, 2, 3);
        net.output_bias_mut().copy_from_slice(&q);
        net
    };
    let online = constant([1.0, 3.0, 2.0]);
    let target = constant([5.0, 7.0, 6.0]);
    let rows = [(0.5, 1.0), (0.5, 0.0), (1.0, 1.0), (0.0, 0.0)];
    let transitions: Vec<Transition> = rows
        .iter()
        .enumerate()
        .map(|(k, &(reward, continue_flag))| Transition {
            state: vec![0.1, 0.2],
            action: k % 3,
            reward,
            next_state: vec![0.3, 0.4],
            continue_flag,
            request_id: k as u64,
        })
        .collect();
    let got = td_targets_double_q(&online, &target, &SampleBatch::from_transitions(&transitions), 0.99).unwrap();
    let want = [0.5 + 0.99 * 7.0, 0.5, 1.0 + 0.99 * 7.0, 0.0];
    outcome(got == want, format!("targets {got:?}, hand-computed {want:?}"))
}

fn c4_workload_statistics() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (k, rate) in [0.5, 8.0, 48.0].into_iter().enumerate() {
        // Generous hold time, then keep exactly the first 100,000 arrivals.
        let n = 100_000;
        let trace = gen_stable(&[rate], 1.05 * n as f64 / rate, &TaskMix::uniform(4), 77 + k as u64).unwrap();
        let times: Vec<f64> = trace.events.iter().take(n + 1).map(|e| e.time_ms).collect();
        let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let rel = (mean / (1000.0 / rate) - 1.0).abs();
        pass &= rel <= C4_INTERARRIVAL_REL && gaps.len() == n;
        notes.push(format!("stable {rate}/s: {} gaps, mean off by {:.2}%", gaps.len(), rel * 100.0));
    }

    // Band membership of every unpredictable-1 regime.
    let trace = gen_unpredictable_time_based(400_000, &TaskMix::uniform(4), 78).unwrap();
    let segs = &trace.segments[..trace.segments.len() - 1];
    let n = segs.len() as f64;
    let band = |r: f64| if r < 2.0 { 0 } else if r < 40.0 { 1 } else { 2 };
    let mut counts = [0.0; 3];
    for s in segs {
        counts[band(s.rate)] += 1.0;
    }
    for (k, p) in [0.90, 0.08, 0.02].into_iter().enumerate() {
        let sigma = (p * (1.0 - p) / n).sqrt();
        let z = (counts[k] / n - p) / sigma;
        pass &= z.abs() <= C4_SIGMAS;
        notes.push(format!("band {k}: {:.4} (z={z:+.2})", counts[k] / n));
    }
    pass &= segs.len() >= 2_000;
    notes.push(format!("{} segments", segs.len()));

    let trace = gen_unpredictable_request_based(5_000_000, &TaskMix::uniform(4), 79).unwrap();
    let ranges = trace.segment_ranges();
    let full = &ranges[..ranges.len() - 1];
    let mean_len = full.iter().map(|r| r.len() as f64).sum::<f64>() / full.len() as f64;
    pass &= (mean_len / 500.0 - 1.0).abs() <= C4_SEGMENT_LEN_REL;
    notes.push(format!("unpredictable-2 mean segment {mean_len:.1} over {}", full.len()));
    outcome(pass, notes.join("; "))
}

fn c5_calibration() -> Outcome {
    let rates = besteffort::eval::STABLE_RATES;
    let report = calibrate_defaults(&ClusterSpec::default(), 40.0, &rates, 40.0, 5).unwrap();
    let large = report.collapse_rate[2];
    let small_worst = report.miss_fraction[0].iter().cloned().fold(0.0, f64::max);
    let small_at_48 = *report.miss_fraction[0].last().unwrap();
    let in_range = large.is_some_and(|c| (C5_COLLAPSE_RANGE.0..=C5_COLLAPSE_RANGE.1).contains(&c));
    outcome(
        in_range && small_at_48 < C5_SMALL_MAX_MISS,
        format!(
            "large collapse {large:?} req/s (want [2, 4]); small miss at 48 req/s {small_at_48:.4}, worst over sweep {small_worst:.4}; medium collapse {:?}",
            report.collapse_rate[1]
        ),
    )
}

fn c6_degenerate() -> Outcome {
    // One task, two tiers. The large tier is fast enough that no request on
    // it can miss at the trained rates, so routing everything there is the
    // analytic optimum (utility 1 against 0.5, with no congestion cost).
    let tier = |name: &str, alpha_ms, beta_ms| ModelTierSpec {
        name: name.into(),
        replicas: 4,
        alpha_ms,
        beta_ms,
        max_batch: 16,
        baseline_max_batch: 16,
        tokens_per_request: 100,
    };
    let cluster = ClusterSpec { gpu_count: 4, tiers: vec![tier("small", 4.0, 0.25), tier("large", 10.0, 0.5)] };
    let reward = RewardSpec {
        tasks: vec![TaskSpec { name: "only".into(), deadline_ms_per_token: 40.0, kind: DeadlineKind::Hard }],
        reward_matrix: vec![vec![0.5, 1.0]],
        ..RewardSpec::default()
    };
    let env = TrainEnv::new(cluster.clone(), reward.clone());
    let workload = TrainingWorkloadSpec { rate_min: 0.25, rate_max: 4.0, ..TrainingWorkloadSpec::default() };
    let cfg = TrainConfig { total_iterations: DEGENERATE_ITERATIONS, workload, seed: 6, ..TrainConfig::default() };
    let net = run_training(&env, &cfg).unwrap().network;

    let rates = [0.25, 0.5, 1.0, 2.0, 3.0, 4.0];
    let trace = gen_stable(&rates, 120.0, &TaskMix::uniform(1), 66).unwrap();
    let mut setup = besteffort::eval::EvalSetup::new(cluster.clone(), reward.clone());
    setup.rate_mode = besteffort::workload::RateMode::TrueRate;
    let run = run_eval(&Policy::Greedy(net), &trace, &setup, 66).unwrap();
    let optimal = run.records.iter().filter(|r| r.tier_id == 1).count() as f64 / run.records.len() as f64;
    // Premise check: all-large serving never misses on this trace.
    let all_large = run_eval(&Policy::Static(1), &trace, &setup, 66).unwrap();
    let premise = all_large.records.iter().all(|r| r.reward == 1.0);
    outcome(
        premise && optimal >= C6_MIN_OPTIMAL,
        format!(
            "{:.2}% of {} greedy actions optimal after {DEGENERATE_ITERATIONS} iterations (all-large meets every deadline: {premise})",
            optimal * 100.0,
            run.records.len()
        ),
    )
}

fn c7_stable_envelope(p: &mut Policies) -> Outcome {
    let (cluster, reward) = base();
    let sc = scenario("stable-sweep", &cluster, &reward).unwrap();
    let nets = p.hard_all();
    let rates = sc.rate_buckets().unwrap().to_vec();
    // mean reward and miss fraction per [policy | static 0..3][rate], averaged over trials
    let mut mean = vec![vec![0.0; rates.len()]; 4];
    let mut miss = vec![vec![0.0; rates.len()]; 4];
    for (trial, net) in nets.iter().enumerate() {
        let policies = [Policy::Greedy(net.clone()), Policy::Static(0), Policy::Static(1), Policy::Static(2)];
        for (k, pol) in policies.iter().enumerate() {
            let rows = per_rate(&eval_on(&sc, pol, trace_seed(trial)), &sc.reward);
            assert_eq!(rows.len(), rates.len());
            for (j, row) in rows.iter().enumerate() {
                mean[k][j] += row.mean_reward / nets.len() as f64;
                miss[k][j] += row.miss_fraction / nets.len() as f64;
            }
        }
    }
    let mut worst_gap = f64::INFINITY;
    let mut worst_rate = 0.0;
    for (j, &rate) in rates.iter().enumerate() {
        let best = (1..4).map(|k| mean[k][j]).fold(f64::NEG_INFINITY, f64::max);
        let gap = mean[0][j] - best;
        if gap < worst_gap {
            worst_gap = gap;
            worst_rate = rate;
        }
    }
    let collapse = |k: usize| rates.iter().zip(&miss[k]).find(|(_, m)| **m > 0.5).map(|(r, _)| *r);
    let large = collapse(3);
    let policy = collapse(0);
    let available = match (large, policy) {
        (Some(l), None) => rates.iter().filter(|r| **r < C7_AVAILABILITY_FACTOR * l).count() > 0,
        (Some(l), Some(p)) => p >= C7_AVAILABILITY_FACTOR * l,
        (None, _) => false,
    };
    let reach = policy.map_or(format!("beyond {}", rates[rates.len() - 1]), |r| format!("{r}"));
    outcome(
        worst_gap >= -C7_ENVELOPE && available,
        format!(
            "policy minus best baseline: worst {worst_gap:+.3} at {worst_rate} req/s (limit -{C7_ENVELOPE}); large collapses at {large:?} req/s, policy misses stay <=50% up to {reach} req/s (need >= {}x)",
            C7_AVAILABILITY_FACTOR
        ),
    )
}

fn c8_unpredictable_windows(p: &mut Policies) -> Outcome {
    let (cluster, reward) = base();
    let sc = scenario("unpredictable-1", &cluster, &reward).unwrap();
    let nets = p.hard_all();
    let mut policy_w = Vec::new();
    let mut large_w = Vec::new();
    for (trial, net) in nets.iter().enumerate() {
        policy_w.extend(windowed(&eval_on(&sc, &Policy::Greedy(net.clone()), trace_seed(trial)).rewards(), WINDOW).unwrap());
        large_w.extend(windowed(&eval_on(&sc, &Policy::Static(2), trace_seed(trial)).rewards(), WINDOW).unwrap());
    }
    let pc = threshold_counts(&policy_w, &TABLE_THRESHOLDS).unwrap();
    let lc = threshold_counts(&large_w, &TABLE_THRESHOLDS).unwrap();
    let above = pc.at_least.iter().zip(&lc.at_least).all(|(a, b)| a > b);
    let perfect = lc.perfect > pc.perfect;
    outcome(
        above && perfect,
        format!(
            "windows >= {:?}: policy {:?} vs large {:?}; = 1.00: policy {} vs large {} ({} trials)",
            TABLE_THRESHOLDS,
            pc.at_least,
            lc.at_least,
            pc.perfect,
            lc.perfect,
            nets.len()
        ),
    )
}

fn c9_soft_ordering(p: &mut Policies) -> Outcome {
    let (cluster, reward) = base();
    let hard = p.hard(0);
    let soft = p.soft();
    let sc = scenario("stable-sweep", &cluster, &reward).unwrap();
    let soft_sc = Scenario { reward: reward.with_kind(DeadlineKind::Soft), ..sc.clone() };
    let rates = sc.rate_buckets().unwrap().to_vec();
    let large = cluster.largest_tier();
    let usage = |sc: &Scenario, net: &QNetwork| {
        let runs: Vec<EvalRun> = (0..3).map(|t| eval_on(sc, &Policy::Greedy(net.clone()), trace_seed(t))).collect();
        let d = selection_distribution(&runs, &rates, reward.num_tasks(), cluster.num_tiers()).unwrap();
        (0..reward.num_tasks()).map(|t| d.riemann_usage(t, large)).collect::<Vec<f64>>()
    };
    let h = usage(&sc, &hard);
    let s = usage(&soft_sc, &soft);
    let change: Vec<f64> = h.iter().zip(&s).map(|(h, s)| (s - h) / h).collect();
    // Quality gap: what a task loses going from the largest to the smallest tier.
    let gap: Vec<f64> = reward.reward_matrix.iter().map(|row| row[large] - row[0]).collect();
    let widest = (0..gap.len()).max_by(|a, b| gap[*a].total_cmp(&gap[*b])).unwrap();
    let strictly_greatest = (0..change.len()).all(|t| t == widest || change[widest] > change[t]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ");
    outcome(
        strictly_greatest,
        format!(
            "largest-tier Riemann usage hard [{}] soft [{}], change [{}]%; widest gap task {}",
            fmt(&h),
            fmt(&s),
            change.iter().map(|c| format!("{:+.0}", c * 100.0)).collect::<Vec<_>>().join(", "),
            reward.tasks[widest].name
        ),
    )
}

fn c10_hardware_utility(p: &mut Policies) -> Outcome {
    let (cluster, reward) = base();
    let sc = scenario("hw-utility-8gpu", &cluster, &reward).unwrap();
    let nets = p.hard_all();
    let mut pol = Vec::new();
    let mut base8 = Vec::new();
    let mut ratio_exact = true;
    for (trial, net) in nets.iter().enumerate() {
        let run = eval_on(&sc, &Policy::Greedy(net.clone()), trace_seed(trial));
        let baseline = eval_on(&sc, &Policy::Static(cluster.largest_tier()), trace_seed(trial));
        assert_eq!((run.gpu_count, baseline.gpu_count), (4, 8));
        pol.extend(hardware_utility(&run.rewards(), run.gpu_count).unwrap());
        base8.extend(hardware_utility(&baseline.rewards(), baseline.gpu_count).unwrap());
        let r = run.rewards();
        let u4 = hardware_utility(&r, 4).unwrap();
        let u8 = hardware_utility(&r, 8).unwrap();
        ratio_exact &= u4.iter().zip(&u8).all(|(a, b)| *a == 2.0 * b);
    }
    let mp = pol.iter().sum::<f64>() / pol.len() as f64;
    let mb = base8.iter().sum::<f64>() / base8.len() as f64;
    outcome(
        mp > mb && ratio_exact,
        format!("mean per-GPU utility: policy on 4 GPUs {mp:.4}, large tier on 8 GPUs {mb:.4} ({:.2}x); 4:8 ratio exactly 2: {ratio_exact}", mp / mb),
    )
}

fn c11_different_deadlines(p: &mut Policies) -> Outcome {
    let (cluster, reward) = base();
    let uniform = p.hard(0);
    let tuned = p.different_deadlines();
    let sc = scenario("different-deadlines", &cluster, &reward).unwrap();
    let large = cluster.largest_tier();
    let share = |net: &QNetwork, task: usize| {
        let mut hit = 0usize;
        let mut total = 0usize;
        for t in 0..3 {
            let run = eval_on(&sc, &Policy::Greedy(net.clone()), trace_seed(t));
            for r in run.records.iter().filter(|r| r.task_id == task) {
                total += 1;
                hit += usize::from(r.tier_id == large);
            }
        }
        hit as f64 / total as f64
    };
    let obqa = reward.task_index("OpenBookQA").unwrap();
    let copa = reward.task_index("COPA").unwrap();
    let (ou, ot) = (share(&uniform, obqa), share(&tuned, obqa));
    let (cu, ct) = (share(&uniform, copa), share(&tuned, copa));
    outcome(
        ot > ou && ct < cu,
        format!("largest-tier share OpenBookQA {ou:.3} -> {ot:.3}, COPA {cu:.3} -> {ct:.3} (uniform -> retrained)"),
    )
}

fn c12_determinism() -> Outcome {
    let pipeline = |dir: &std::path::Path| -> Vec<u8> {
        let (cluster, reward) = base();
        let sc = scenario("unpredictable-2", &cluster, &reward).unwrap();
        let path = dir.join("trace.csv");
        write_trace(&sc.generate(12).unwrap(), &path).unwrap();
        let trace = read_trace(&path, reward.num_tasks()).unwrap();
        let env = TrainEnv::new(cluster.clone(), reward.clone());
        let cfg = TrainConfig { total_iterations: 6_000, warmup: 2_000, seed: 12, ..TrainConfig::default() };
        let net = run_training(&env, &cfg).unwrap().network;
        let ckpt = dir.join("policy.ckpt");
        save_checkpoint(&net, &ckpt).unwrap();
        let policy = Policy::Greedy(load_checkpoint(&ckpt, Some((4, 3))).unwrap());
        let run = run_eval(&policy, &trace, &sc.setup_for(&policy, &EstimatorSpec::default()), 12).unwrap();
        let mut csv = Vec::new();
        write_metrics_csv(&run, &mut csv).unwrap();
        std::fs::write(dir.join("metrics.csv"), &csv).unwrap();
        std::fs::read(dir.join("metrics.csv")).unwrap()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (x, y) = (pipeline(a.path()), pipeline(b.path()));
    outcome(x == y && x.len() > 100_000, format!("metrics CSVs of {} and {} bytes, identical: {}", x.len(), y.len(), x == y))
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("BESTEFFORT_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut policies = Policies {
        cache_dir: std::env::var_os("BESTEFFORT_ACCEPTANCE_CACHE").map(PathBuf::from),
        nets: HashMap::new(),
    };
    type Check<'a> = Box<dyn FnMut(&mut Policies) -> Outcome + 'a>;
    let criteria: Vec<(u32, &str, Check)> = vec![
        (1, "reward oracle", Box::new(|_| c1_reward_oracle())),
        (2, "gradient check", Box::new(|_| c2_gradient_check())),
        (3, "double-Q targets", Box::new(|_| c3_double_q_targets())),
        (4, "workload statistics", Box::new(|_| c4_workload_statistics())),
        (5, "calibration", Box::new(|_| c5_calibration())),
        (6, "degenerate-environment optimality", Box::new(|_| c6_degenerate())),
        (7, "policy vs baselines on the stable sweep", Box::new(c7_stable_envelope)),
        (8, "unpredictable workload windows", Box::new(c8_unpredictable_windows)),
        (9, "soft-deadline ordering", Box::new(c9_soft_ordering)),
        (10, "hardware utility", Box::new(c10_hardware_utility)),
        (11, "different deadlines", Box::new(c11_different_deadlines)),
        (12, "determinism", Box::new(|_| c12_determinism())),
    ];
    let mut failed = Vec::new();
    for (id, name, mut check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = check(&mut policies);
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict}  {name}: {} [{:.1?}]", out.detail, start.elapsed());
        if !out.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
