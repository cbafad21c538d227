use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};

/// One committed experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// 0 at workload resets, 1 otherwise.
    pub continue_flag: f64,
    /// The routed request this experience came from.
    pub request_id: u64,
}

/// Sampled rows in flat row-major arrays.
#[derive(Debug, Clone, Default)]
pub struct SampleBatch {
    pub states: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub continues: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn from_transitions(rows: &[Transition]) -> Self {
        let mut out = Self::default();
        for t in rows {
            out.states.extend_from_slice(&t.state);
            out.actions.push(t.action);
            out.rewards.push(t.reward);
            out.next_states.extend_from_slice(&t.next_state);
            out.continues.push(t.continue_flag);
        }
        out
    }
}

/// Fixed-capacity ring of transitions, oldest overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    dim: usize,
    capacity: usize,
    len: usize,
    head: usize,
    states: Vec<f64>,
    next_states: Vec<f64>,
    actions: Vec<u32>,
    rewards: Vec<f64>,
    continues: Vec<f64>,
    request_ids: Vec<u64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            dim,
            capacity,
            len: 0,
            head: 0,
            states: Vec::new(),
            next_states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            continues: Vec::new(),
            request_ids: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.state.len() != self.dim || t.next_state.len() != self.dim {
            return Err(Error::Dimension(format!("transition width differs from {}", self.dim)));
        }
        if !(0.0..=1.0).contains(&t.reward) {
            return Err(Error::InvalidInput(format!("reward {} outside [0, 1]", t.reward)));
        }
        let d = self.dim;
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.next_states.extend_from_slice(&t.next_state);
            self.actions.push(t.action as u32);
            self.rewards.push(t.reward);
            self.continues.push(t.continue_flag);
            self.request_ids.push(t.request_id);
            self.len += 1;
        } else {
            let i = self.head;
            self.states[i * d..(i + 1) * d].copy_from_slice(&t.state);
            self.next_states[i * d..(i + 1) * d].copy_from_slice(&t.next_state);
            self.actions[i] = t.action as u32;
            self.rewards[i] = t.reward;
            self.continues[i] = t.continue_flag;
            self.request_ids[i] = t.request_id;
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, slot: usize) -> Option<Transition> {
        if slot >= self.len {
            return None;
        }
        let d = self.dim;
        Some(Transition {
            state: self.states[slot * d..(slot + 1) * d].to_vec(),
            action: self.actions[slot] as usize,
            reward: self.rewards[slot],
            next_state: self.next_states[slot * d..(slot + 1) * d].to_vec(),
            continue_flag: self.continues[slot],
            request_id: self.request_ids[slot],
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len).filter_map(|i| self.get(i))
    }

    /// Uniform slot indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.len)).collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, out: &mut SampleBatch) {
        assert!(self.len > 0, "sampling from an empty buffer");
        let d = self.dim;
        out.states.clear();
        out.next_states.clear();
        out.actions.clear();
        out.rewards.clear();
        out.continues.clear();
        for _ in 0..n {
            let i = rng.random_range(0..self.len);
            out.states.extend_from_slice(&self.states[i * d..(i + 1) * d]);
            out.next_states.extend_from_slice(&self.next_states[i * d..(i + 1) * d]);
            out.actions.push(self.actions[i] as usize);
            out.rewards.push(self.rewards[i]);
            out.continues.push(self.continues[i]);
        }
    }
}

#[derive(Debug, Clone)]
struct Pending {
    state: Vec<f64>,
    action: usize,
    reward: Option<f64>,
    next: Option<(Vec<f64>, f64)>,
}

/// Routing decisions whose reward (known at completion) or successor state
/// (known at the next decision) is still missing.
#[derive(Debug, Clone, Default)]
pub struct PendingTransitions {
    open: HashMap<u64, Pending>,
}

impl PendingTransitions {
    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    pub fn open(&mut self, request_id: u64, state: &[f64], action: usize) {
        self.open.insert(request_id, Pending { state: state.to_vec(), action, reward: None, next: None });
    }

    pub fn resolve_reward(&mut self, request_id: u64, reward: f64) -> Option<Transition> {
        let p = self.open.get_mut(&request_id)?;
        p.reward = Some(reward);
        self.try_commit(request_id)
    }

    pub fn set_next(&mut self, request_id: u64, next_state: &[f64], continue_flag: f64) -> Option<Transition> {
        let p = self.open.get_mut(&request_id)?;
        p.next = Some((next_state.to_vec(), continue_flag));
        self.try_commit(request_id)
    }

    fn try_commit(&mut self, request_id: u64) -> Option<Transition> {
        let p = self.open.get(&request_id)?;
        if p.reward.is_none() || p.next.is_none() {
            return None;
        }
        let p = self.open.remove(&request_id)?;
        let (next_state, continue_flag) = p.next.expect("checked");
        Some(Transition {
            state: p.state,
            action: p.action,
            reward: p.reward.expect("checked"),
            next_state,
            continue_flag,
            request_id,
        })
    }
}
