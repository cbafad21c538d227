//! Event-driven model of a replicated multi-tier serving cluster.
//!
//! Each replica runs iteration-level batching: an iteration started at `t`
//! with `b` active requests lasts `alpha + beta * b` ms and emits one token
//! for each of those `b` requests. Requests admitted while an iteration is
//! running join the next one. At equal timestamps iteration ends are
//! processed first, then arrivals (via [`Simulator::submit`]), then
//! iteration starts.

mod calibrate;

pub use calibrate::{calibrate_defaults, miss_fraction, CalibrationReport};

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One model size and its replica set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTierSpec {
    pub name: String,
    pub replicas: usize,
    /// Per-iteration latency at zero batch, ms.
    pub alpha_ms: f64,
    /// Added iteration latency per active request, ms.
    pub beta_ms: f64,
    /// Batch limit when sharing GPU memory with the other tiers.
    pub max_batch: usize,
    /// Batch limit when this tier owns all GPU memory (static baselines).
    pub baseline_max_batch: usize,
    pub tokens_per_request: u32,
}

impl ModelTierSpec {
    pub fn iteration_ms(&self, batch: usize) -> f64 {
        self.alpha_ms + self.beta_ms * batch as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    /// GPUs backing the cluster, used only to normalize hardware utility.
    pub gpu_count: usize,
    /// Ordered smallest to largest model.
    pub tiers: Vec<ModelTierSpec>,
}

impl Default for ClusterSpec {
    /// Three tiers on four GPUs, calibrated so the large tier saturates near
    /// 2-3 req/s and the medium tier near 26 req/s at a 40 ms/token deadline.
    fn default() -> Self {
        let tier = |name: &str, alpha_ms, beta_ms, max_batch, baseline_max_batch| ModelTierSpec {
            name: name.to_string(),
            replicas: 4,
            alpha_ms,
            beta_ms,
            max_batch,
            baseline_max_batch,
            tokens_per_request: 100,
        };
        Self {
            gpu_count: 4,
            tiers: vec![
                tier("small", 4.75, 0.25, 128, 160),
                tier("medium", 8.0, 1.2, 32, 48),
                tier("large", 30.0, 3.5, 8, 12),
            ],
        }
    }
}

impl ClusterSpec {
    pub fn num_tiers(&self) -> usize {
        self.tiers.len()
    }

    pub fn largest_tier(&self) -> usize {
        self.tiers.len().saturating_sub(1)
    }

    /// Copy of the cluster as run by a static baseline: every tier uses its
    /// whole-memory batch limit.
    pub fn for_static_baseline(&self) -> ClusterSpec {
        let mut out = self.clone();
        for t in &mut out.tiers {
            t.max_batch = t.baseline_max_batch;
        }
        out
    }

    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.tiers.is_empty() {
            errs.push("cluster must have at least one tier".to_string());
        }
        if self.gpu_count == 0 {
            errs.push("cluster.gpu_count must be >= 1".to_string());
        }
        for (i, t) in self.tiers.iter().enumerate() {
            let at = format!("cluster.tiers[{i}] ({})", t.name);
            if t.replicas == 0 {
                errs.push(format!("{at}: replicas must be >= 1"));
            }
            if !(t.alpha_ms > 0.0 && t.alpha_ms.is_finite()) {
                errs.push(format!("{at}: alpha_ms must be positive"));
            }
            if !(t.beta_ms >= 0.0 && t.beta_ms.is_finite()) {
                errs.push(format!("{at}: beta_ms must be nonnegative"));
            }
            if t.max_batch == 0 || t.baseline_max_batch == 0 {
                errs.push(format!("{at}: batch limits must be >= 1"));
            }
            if t.tokens_per_request == 0 {
                errs.push(format!("{at}: tokens_per_request must be >= 1"));
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Lifecycle record of one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: u64,
    pub task_id: usize,
    pub arrival_ms: f64,
    pub tier_id: usize,
    pub replica_id: usize,
    pub tokens_done: u32,
    pub tokens_target: u32,
    pub completion_ms: Option<f64>,
    pub realized_ms_per_token: Option<f64>,
}

impl Request {
    /// End-to-end latency per generated token; only set once completed.
    pub fn realized(&self) -> f64 {
        self.realized_ms_per_token.expect("request has not completed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Idle,
    /// Iteration start scheduled at this time.
    Starting,
    /// Iteration over the first `members` active requests running.
    Running { members: usize },
}

#[derive(Debug, Clone)]
struct Replica {
    tier_id: usize,
    replica_id: usize,
    active: Vec<Request>,
    queue: VecDeque<Request>,
    phase: Phase,
}

/// Read-only view of a replica's occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicaView {
    pub tier_id: usize,
    pub replica_id: usize,
    pub active: usize,
    pub queued: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    IterationEnd = 0,
    IterationStart = 1,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time_ms: f64,
    kind: EventKind,
    replica: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time_ms
            .total_cmp(&other.time_ms)
            .then(self.kind.cmp(&other.kind))
            .then(self.replica.cmp(&other.replica))
    }
}

/// The cluster simulation. Single owner, internally sequential.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: ClusterSpec,
    clock_ms: f64,
    events: BinaryHeap<Reverse<Event>>,
    replicas: Vec<Replica>,
    /// Index of each tier's first replica in `replicas`.
    tier_offsets: Vec<usize>,
    tier_load: Vec<usize>,
    submitted: u64,
    completed: u64,
}

impl Simulator {
    pub fn new(spec: ClusterSpec) -> Result<Self> {
        spec.validate()?;
        let mut replicas = Vec::new();
        let mut tier_offsets = Vec::with_capacity(spec.tiers.len());
        for (tier_id, tier) in spec.tiers.iter().enumerate() {
            tier_offsets.push(replicas.len());
            for replica_id in 0..tier.replicas {
                replicas.push(Replica {
                    tier_id,
                    replica_id,
                    active: Vec::with_capacity(tier.max_batch),
                    queue: VecDeque::new(),
                    phase: Phase::Idle,
                });
            }
        }
        let tiers = spec.tiers.len();
        Ok(Self {
            spec,
            clock_ms: 0.0,
            events: BinaryHeap::new(),
            replicas,
            tier_offsets,
            tier_load: vec![0; tiers],
            submitted: 0,
            completed: 0,
        })
    }

    pub fn spec(&self) -> &ClusterSpec {
        &self.spec
    }

    pub fn clock_ms(&self) -> f64 {
        self.clock_ms
    }

    pub fn submitted(&self) -> u64 {
        self.submitted
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn in_flight(&self) -> u64 {
        self.submitted - self.completed
    }

    /// Requests waiting for a batch slot, across all replicas.
    pub fn queued(&self) -> usize {
        self.replicas.iter().map(|r| r.queue.len()).sum()
    }

    /// Per-tier count of active plus queued requests.
    pub fn observe(&self) -> &[usize] {
        &self.tier_load
    }

    pub fn replica(&self, tier_id: usize, replica_id: usize) -> Option<ReplicaView> {
        let offset = *self.tier_offsets.get(tier_id)?;
        if replica_id >= self.spec.tiers[tier_id].replicas {
            return None;
        }
        let r = &self.replicas[offset + replica_id];
        Some(ReplicaView { tier_id: r.tier_id, replica_id: r.replica_id, active: r.active.len(), queued: r.queue.len() })
    }

    fn tier_range(&self, tier_id: usize) -> std::ops::Range<usize> {
        let start = self.tier_offsets[tier_id];
        start..start + self.spec.tiers[tier_id].replicas
    }

    /// Routes a new request (arriving now) to `tier_id`, choosing the replica
    /// with the smallest active batch (then shortest queue, then lowest id).
    pub fn submit(&mut self, id: u64, task_id: usize, tier_id: usize) -> Result<usize> {
        let tokens = self
            .spec
            .tiers
            .get(tier_id)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown tier {tier_id}")))?
            .tokens_per_request;
        self.submit_with_tokens(id, task_id, tier_id, tokens)
    }

    pub fn submit_with_tokens(
        &mut self,
        id: u64,
        task_id: usize,
        tier_id: usize,
        tokens_target: u32,
    ) -> Result<usize> {
        let Some(tier) = self.spec.tiers.get(tier_id) else {
            return Err(Error::InvalidParameter(format!("unknown tier {tier_id}")));
        };
        if tokens_target == 0 {
            return Err(Error::InvalidParameter("tokens_target must be >= 1".into()));
        }
        let max_batch = tier.max_batch;
        let idx = self
            .tier_range(tier_id)
            .min_by_key(|&i| (self.replicas[i].active.len(), self.replicas[i].queue.len(), i))
            .expect("tier has replicas");
        let now = self.clock_ms;
        let replica = &mut self.replicas[idx];
        let req = Request {
            id,
            task_id,
            arrival_ms: now,
            tier_id,
            replica_id: replica.replica_id,
            tokens_done: 0,
            tokens_target,
            completion_ms: None,
            realized_ms_per_token: None,
        };
        if replica.active.len() < max_batch {
            replica.active.push(req);
        } else {
            replica.queue.push_back(req);
        }
        if replica.phase == Phase::Idle {
            replica.phase = Phase::Starting;
            self.events.push(Reverse(Event { time_ms: now, kind: EventKind::IterationStart, replica: idx }));
        }
        self.tier_load[tier_id] += 1;
        self.submitted += 1;
        Ok(self.replicas[idx].replica_id)
    }

    /// Processes events up to `until_ms` and returns the requests that
    /// completed, in completion order.
    pub fn advance(&mut self, until_ms: f64) -> Vec<Request> {
        let mut done = Vec::new();
        self.advance_into(until_ms, &mut done);
        done
    }

    /// Like [`advance`](Self::advance) but appends to `done`.
    ///
    /// Iteration starts at exactly `until_ms` are left pending so requests
    /// submitted at that instant join the batch.
    pub fn advance_into(&mut self, until_ms: f64, done: &mut Vec<Request>) {
        while let Some(&Reverse(ev)) = self.events.peek() {
            if ev.time_ms > until_ms || (ev.time_ms == until_ms && ev.kind == EventKind::IterationStart) {
                break;
            }
            self.events.pop();
            self.clock_ms = ev.time_ms;
            match ev.kind {
                EventKind::IterationStart => self.start_iteration(ev.replica),
                EventKind::IterationEnd => self.end_iteration(ev.replica, done),
            }
        }
        if until_ms.is_finite() && until_ms > self.clock_ms {
            self.clock_ms = until_ms;
        }
    }

    /// Runs until every submitted request has completed.
    pub fn drain(&mut self) -> Vec<Request> {
        self.advance(f64::INFINITY)
    }

    fn start_iteration(&mut self, idx: usize) {
        let replica = &mut self.replicas[idx];
        debug_assert_eq!(replica.phase, Phase::Starting);
        let members = replica.active.len();
        debug_assert!(members > 0);
        let dur = self.spec.tiers[replica.tier_id].iteration_ms(members);
        replica.phase = Phase::Running { members };
        self.events.push(Reverse(Event {
            time_ms: self.clock_ms + dur,
            kind: EventKind::IterationEnd,
            replica: idx,
        }));
    }

    fn end_iteration(&mut self, idx: usize, done: &mut Vec<Request>) {
        let now = self.clock_ms;
        let replica = &mut self.replicas[idx];
        let Phase::Running { members } = replica.phase else {
            unreachable!("iteration end on a replica that is not running");
        };
        let tier_id = replica.tier_id;
        let max_batch = self.spec.tiers[tier_id].max_batch;
        let mut finished = 0usize;
        let mut i = 0;
        let mut remaining_members = members;
        while remaining_members > 0 {
            remaining_members -= 1;
            let req = &mut replica.active[i];
            req.tokens_done += 1;
            if req.tokens_done >= req.tokens_target {
                // Order-preserving removal keeps FIFO admission order intact.
                let mut req = replica.active.remove(i);
                req.completion_ms = Some(now);
                req.realized_ms_per_token = Some((now - req.arrival_ms) / f64::from(req.tokens_target));
                done.push(req);
                finished += 1;
            } else {
                i += 1;
            }
        }
        while replica.active.len() < max_batch {
            match replica.queue.pop_front() {
                Some(req) => replica.active.push(req),
                None => break,
            }
        }
        self.tier_load[tier_id] -= finished;
        self.completed += finished as u64;
        if replica.active.is_empty() {
            replica.phase = Phase::Idle;
        } else {
            replica.phase = Phase::Starting;
            self.events.push(Reverse(Event { time_ms: now, kind: EventKind::IterationStart, replica: idx }));
        }
    }
}
