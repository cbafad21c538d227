//! Deep Q-learning of the router against the simulated cluster.
//!
//! Every routed request is one iteration: observe, act epsilon-greedily,
//! submit, then take one gradient step once the replay buffer is warm. A
//! decision's reward only exists when its request completes, so its
//! transition waits in [`PendingTransitions`] until both the reward and the
//! state seen at the following decision are known.

mod double_q;
mod optim;
mod replay;

pub use double_q::{double_q_targets_into, td_targets_double_q};
pub use optim::{Adam, Optimizer, OptimizerKind};
pub use replay::{PendingTransitions, ReplayBuffer, SampleBatch, Transition};

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{select_action, BatchScratch, LossKind, QNetwork, StateEncoding, DEFAULT_HIDDEN};
use crate::reward::{request_reward, RewardSpec};
use crate::rng::{component_rng, derive_seed, SimRng};
use crate::sim::{ClusterSpec, Request, Simulator};
use crate::workload::{EstimatorSpec, RateEstimator, RateMode, TaskMix, TrainingWorkload, TrainingWorkloadSpec};

/// Rate feature shown to the router during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainRateMode {
    TrueRate,
    Estimated,
    /// Fair coin per rate regime.
    #[default]
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub discount: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub target_sync_every: u64,
    pub total_iterations: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Linear decay length; `None` means a quarter of `total_iterations`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_decay_steps: Option<u64>,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub hidden: usize,
    pub rate_mode: TrainRateMode,
    pub workload: TrainingWorkloadSpec,
    /// Queued (unbatched) requests that trigger a cluster reset.
    pub reset_backlog: usize,
    pub log_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            learning_rate: 1e-4,
            batch_size: 1024,
            target_sync_every: 500,
            total_iterations: 200_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: None,
            buffer_capacity: 500_000,
            warmup: 10_000,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::Huber,
            hidden: DEFAULT_HIDDEN,
            rate_mode: TrainRateMode::Mixed,
            workload: TrainingWorkloadSpec::default(),
            reset_backlog: 512,
            log_every: 10_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults for continuing from a trained checkpoint.
    pub fn fine_tune_defaults() -> Self {
        Self { total_iterations: 100_000, epsilon_start: 0.2, ..Self::default() }
    }

    pub fn epsilon_at(&self, step: u64) -> f64 {
        let decay = self.epsilon_decay_steps.unwrap_or(self.total_iterations / 4).max(1);
        let frac = (step.saturating_sub(1) as f64 / decay as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.discount > 0.0 && self.discount < 1.0) {
            errs.push("training.discount must lie in (0, 1)".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push("training.learning_rate must be positive".to_string());
        }
        if self.batch_size == 0 {
            errs.push("training.batch_size must be >= 1".to_string());
        }
        if self.batch_size > self.buffer_capacity {
            errs.push("training.batch_size exceeds training.buffer_capacity".to_string());
        }
        if self.target_sync_every == 0 {
            errs.push("training.target_sync_every must be >= 1".to_string());
        }
        for (name, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("training.{name} must lie in [0, 1]"));
            }
        }
        if self.hidden == 0 {
            errs.push("training.hidden must be >= 1".to_string());
        }
        if self.log_every == 0 {
            errs.push("training.log_every must be >= 1".to_string());
        }
        let w = &self.workload;
        if !(w.rate_min > 0.0 && w.rate_max >= w.rate_min && w.rate_max.is_finite()) {
            errs.push("training.workload rates must satisfy 0 < rate_min <= rate_max".to_string());
        }
        if !(w.mean_regime_requests >= 1.0) {
            errs.push("training.workload.mean_regime_requests must be >= 1".to_string());
        }
        errs
    }
}

/// The system a router is trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainEnv {
    pub cluster: ClusterSpec,
    pub reward: RewardSpec,
    pub encoding: StateEncoding,
    pub tasks: TaskMix,
    pub estimator: EstimatorSpec,
}

impl TrainEnv {
    pub fn new(cluster: ClusterSpec, reward: RewardSpec) -> Self {
        let encoding = StateEncoding::for_cluster(&cluster);
        let tasks = TaskMix::uniform(reward.num_tasks());
        Self { cluster, reward, encoding, tasks, estimator: EstimatorSpec::default() }
    }

    pub fn input_dim(&self) -> usize {
        self.encoding.input_dim(self.reward.num_tasks())
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = self.cluster.validation_errors();
        errs.extend(self.reward.check(self.cluster.num_tiers()).0);
        errs.extend(self.encoding.validation_errors());
        if self.encoding.num_tiers() != self.cluster.num_tiers() {
            errs.push("encoding.batch_scale length differs from tier count".to_string());
        }
        if self.tasks.tasks().iter().any(|&t| t >= self.reward.num_tasks()) {
            errs.push("task mix references an unknown task".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub step: u64,
    /// Mean loss of the updates in the window; `None` before warmup.
    pub loss: Option<f64>,
    /// Mean reward of requests completed in the window.
    pub mean_recent_reward: Option<f64>,
    pub epsilon: f64,
}

pub const TRAIN_LOG_HEADER: &str = "step,loss,mean_recent_reward,epsilon";

pub fn write_train_log<W: Write>(rows: &[TrainLogRow], out: &mut W) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    writeln!(out, "{TRAIN_LOG_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.step, opt(r.loss), opt(r.mean_recent_reward), r.epsilon)?;
    }
    Ok(())
}

pub fn save_train_log(rows: &[TrainLogRow], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_train_log(rows, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reusable buffers for [`train_step`].
#[derive(Debug, Clone, Default)]
pub struct StepScratch {
    batch: SampleBatch,
    online: BatchScratch,
    target: BatchScratch,
    targets: Vec<f64>,
    grad: Vec<f64>,
}

/// One DQN update. Returns `None` (nothing changed) while the buffer holds
/// fewer than `max(batch_size, warmup)` transitions. The target network is
/// overwritten with the online one after the update when
/// `step_index % target_sync_every == 0`.
#[allow(clippy::too_many_arguments)]
pub fn train_step<R: Rng + ?Sized>(
    online: &mut QNetwork,
    target: &mut QNetwork,
    buffer: &ReplayBuffer,
    cfg: &TrainConfig,
    step_index: u64,
    optimizer: &mut Optimizer,
    rng: &mut R,
    scratch: &mut StepScratch,
) -> Option<f64> {
    if buffer.len() < cfg.batch_size.max(cfg.warmup) || buffer.is_empty() {
        return None;
    }
    buffer.sample_into(rng, cfg.batch_size, &mut scratch.batch);
    double_q_targets_into(
        online,
        target,
        &scratch.batch,
        cfg.discount,
        &mut scratch.online,
        &mut scratch.target,
        &mut scratch.targets,
    );
    let loss = online.loss_and_gradient(
        &scratch.batch.states,
        &scratch.batch.actions,
        &scratch.targets,
        cfg.loss,
        &mut scratch.online,
        &mut scratch.grad,
    );
    optimizer.step(online.params_mut(), &scratch.grad);
    if step_index % cfg.target_sync_every == 0 {
        target.copy_from(online);
    }
    Some(loss)
}

#[derive(Debug, Default, Clone, Copy)]
struct LogWindow {
    loss_sum: f64,
    losses: u64,
    reward_sum: f64,
    rewards: u64,
}

/// Training state machine; [`run_training`] drives it to completion.
pub struct Trainer {
    env: TrainEnv,
    cfg: TrainConfig,
    online: QNetwork,
    target: QNetwork,
    optimizer: Optimizer,
    buffer: ReplayBuffer,
    pending: PendingTransitions,
    sim: Simulator,
    workload: TrainingWorkload,
    estimator: RateEstimator,
    explore_rng: SimRng,
    replay_rng: SimRng,
    mode_rng: SimRng,
    time_offset_ms: f64,
    last_decision: Option<u64>,
    step: u64,
    resets: u64,
    enc: Vec<f64>,
    done: Vec<Request>,
    scratch: StepScratch,
    window: LogWindow,
    log: Vec<TrainLogRow>,
    audit: Option<Vec<(Request, f64)>>,
}

impl Trainer {
    /// Starts from `init` when given, else from a seeded fresh network.
    pub fn new(env: TrainEnv, cfg: TrainConfig, init: Option<QNetwork>) -> Result<Self> {
        env.validate()?;
        let errs = cfg.validation_errors();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let input_dim = env.input_dim();
        let tiers = env.cluster.num_tiers();
        let online = match init {
            Some(net) => {
                if net.input_dim() != input_dim || net.outputs() != tiers {
                    return Err(Error::Dimension(format!(
                        "network is {}->{}, environment needs {input_dim}->{tiers}",
                        net.input_dim(),
                        net.outputs()
                    )));
                }
                net
            }
            None => QNetwork::new(input_dim, cfg.hidden, tiers, &mut component_rng(cfg.seed, "init")),
        };
        let target = online.clone();
        let optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, online.params().len());
        let workload =
            TrainingWorkload::new(cfg.workload.clone(), env.tasks.clone(), derive_seed(cfg.seed, "workload"))?;
        let estimator = env.estimator.build(RateMode::Estimated)?;
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.buffer_capacity, input_dim)?,
            pending: PendingTransitions::default(),
            sim: Simulator::new(env.cluster.clone())?,
            workload,
            estimator,
            explore_rng: component_rng(cfg.seed, "explore"),
            replay_rng: component_rng(cfg.seed, "replay"),
            mode_rng: component_rng(cfg.seed, "rate-mode"),
            time_offset_ms: 0.0,
            last_decision: None,
            step: 0,
            resets: 0,
            enc: vec![0.0; input_dim],
            done: Vec::new(),
            scratch: StepScratch::default(),
            window: LogWindow::default(),
            log: Vec::new(),
            audit: None,
            online,
            target,
            optimizer,
            env,
            cfg,
        })
    }

    /// Keep every completed request with the reward it was credited.
    pub fn enable_audit(&mut self) {
        self.audit = Some(Vec::new());
    }

    pub fn audit(&self) -> &[(Request, f64)] {
        self.audit.as_deref().unwrap_or(&[])
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn resets(&self) -> u64 {
        self.resets
    }

    pub fn log(&self) -> &[TrainLogRow] {
        &self.log
    }

    fn commit(&mut self, t: Option<Transition>) -> Result<()> {
        if let Some(t) = t {
            self.buffer.push(&t)?;
        }
        Ok(())
    }

    fn settle_completions(&mut self) -> Result<()> {
        let done = std::mem::take(&mut self.done);
        for req in &done {
            let r = request_reward(req.task_id, req.tier_id, req.realized(), &self.env.reward)?;
            self.window.reward_sum += r;
            self.window.rewards += 1;
            let t = self.pending.resolve_reward(req.id, r);
            self.commit(t)?;
            if let Some(audit) = &mut self.audit {
                audit.push((req.clone(), r));
            }
        }
        self.done = done;
        self.done.clear();
        Ok(())
    }

    /// Drains the cluster, ends the current episode and starts an empty one.
    fn reset_cluster(&mut self, now_ms: f64) -> Result<()> {
        self.done.extend(self.sim.drain());
        self.settle_completions()?;
        if let Some(prev) = self.last_decision.take() {
            let terminal = self.enc.clone();
            let t = self.pending.set_next(prev, &terminal, 0.0);
            self.commit(t)?;
        }
        debug_assert!(self.pending.is_empty());
        self.sim = Simulator::new(self.env.cluster.clone())?;
        self.time_offset_ms = now_ms;
        self.estimator.reset();
        self.resets += 1;
        Ok(())
    }

    /// Routes one training request; returns the loss when an update ran.
    pub fn step(&mut self) -> Result<Option<f64>> {
        self.step += 1;
        let step = self.step;
        let arrival = self.workload.next_arrival();
        if arrival.new_regime {
            let mode = match self.cfg.rate_mode {
                TrainRateMode::TrueRate => RateMode::TrueRate,
                TrainRateMode::Estimated => RateMode::Estimated,
                TrainRateMode::Mixed if self.mode_rng.random_bool(0.5) => RateMode::TrueRate,
                TrainRateMode::Mixed => RateMode::Estimated,
            };
            self.estimator.set_mode(mode);
        }
        let now = arrival.time_ms - self.time_offset_ms;
        self.sim.advance_into(now, &mut self.done);
        self.settle_completions()?;

        let rate = self.estimator.observe(arrival.time_ms, arrival.rate)?;
        let num_tasks = self.env.reward.num_tasks();
        self.env
            .encoding
            .encode_into(arrival.task_id, num_tasks, self.sim.observe(), rate, &mut self.enc)?;
        if let Some(prev) = self.last_decision {
            let t = self.pending.set_next(prev, &self.enc, 1.0);
            self.commit(t)?;
        }
        let epsilon = self.cfg.epsilon_at(step);
        let action = select_action(&self.online, &self.enc, epsilon, &mut self.explore_rng)?;
        self.sim.submit(step, arrival.task_id, action)?;
        self.pending.open(step, &self.enc, action);
        self.last_decision = Some(step);

        let loss = train_step(
            &mut self.online,
            &mut self.target,
            &self.buffer,
            &self.cfg,
            step,
            &mut self.optimizer,
            &mut self.replay_rng,
            &mut self.scratch,
        );
        if let Some(l) = loss {
            if !l.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            self.window.loss_sum += l;
            self.window.losses += 1;
        }
        if self.sim.queued() > self.cfg.reset_backlog {
            self.reset_cluster(arrival.time_ms)?;
        }
        if step % self.cfg.log_every == 0 {
            let w = std::mem::take(&mut self.window);
            self.log.push(TrainLogRow {
                step,
                loss: (w.losses > 0).then(|| w.loss_sum / w.losses as f64),
                mean_recent_reward: (w.rewards > 0).then(|| w.reward_sum / w.rewards as f64),
                epsilon,
            });
        }
        Ok(loss)
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome { network: self.online, log: self.log }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: QNetwork,
    pub log: Vec<TrainLogRow>,
}

/// Trains from scratch for `cfg.total_iterations` routed requests.
pub fn run_training(env: &TrainEnv, cfg: &TrainConfig) -> Result<TrainOutcome> {
    run_training_from(env, cfg, None, 0, &mut |_, _| Ok(()))
}

/// Trains from `init` (or a fresh network), calling `on_checkpoint` every
/// `checkpoint_every` steps when that is nonzero.
pub fn run_training_from(
    env: &TrainEnv,
    cfg: &TrainConfig,
    init: Option<QNetwork>,
    checkpoint_every: u64,
    on_checkpoint: &mut dyn FnMut(u64, &QNetwork) -> Result<()>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(env.clone(), cfg.clone(), init)?;
    for _ in 0..cfg.total_iterations {
        trainer.step()?;
        if checkpoint_every > 0 && trainer.steps_done() % checkpoint_every == 0 {
            on_checkpoint(trainer.steps_done(), trainer.online())?;
        }
    }
    Ok(trainer.into_outcome())
}

/// Continues training `network` under `env` (typically a new reward spec).
pub fn fine_tune(network: QNetwork, env: &TrainEnv, cfg: &TrainConfig) -> Result<QNetwork> {
    Ok(run_training_from(env, cfg, Some(network), 0, &mut |_, _| Ok(()))?.network)
}
