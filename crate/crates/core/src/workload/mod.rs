//! Arrival traces: generation, serialization and online rate estimation.

mod estimator;
mod generate;
mod io;

pub use estimator::{EstimatorKind, EstimatorSpec, RateEstimator, RateMode, DEFAULT_PRIOR_RATE, DEFAULT_WINDOW};
pub use generate::{
    gen_stable, gen_unpredictable_request_based, gen_unpredictable_time_based, shifted_geometric,
    TrainingArrival, TrainingWorkload, TrainingWorkloadSpec, UNPREDICTABLE_REQUESTS,
};
pub use io::{read_trace, write_trace, write_trace_to, TRACE_HEADER};

use std::ops::Range;

use crate::error::{Error, Result};

/// One client request arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalEvent {
    /// Milliseconds since trace start.
    pub time_ms: f64,
    pub task_id: usize,
}

/// Start of a constant-rate regime inside a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentMark {
    pub start_index: usize,
    /// The generator's rate for this segment, requests/second.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkloadTrace {
    pub events: Vec<ArrivalEvent>,
    pub segments: Vec<SegmentMark>,
    pub seed: u64,
}

impl WorkloadTrace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Event index ranges of each segment, in order.
    pub fn segment_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.segments.len());
        for (i, mark) in self.segments.iter().enumerate() {
            let end = self
                .segments
                .get(i + 1)
                .map_or(self.events.len(), |next| next.start_index);
            out.push(mark.start_index..end);
        }
        out
    }

    /// True generator rate for every event.
    pub fn event_rates(&self) -> Vec<f64> {
        let mut rates = vec![0.0; self.events.len()];
        for (range, mark) in self.segment_ranges().into_iter().zip(&self.segments) {
            rates[range].fill(mark.rate);
        }
        rates
    }

    /// Checks ordering, task range and segment structure.
    pub fn validate(&self, num_tasks: usize) -> Result<()> {
        for (i, pair) in self.events.windows(2).enumerate() {
            if pair[1].time_ms < pair[0].time_ms {
                return Err(Error::InvalidInput(format!(
                    "event {} at {} ms precedes event {} at {} ms",
                    i + 1,
                    pair[1].time_ms,
                    i,
                    pair[0].time_ms
                )));
            }
        }
        if let Some(ev) = self.events.iter().find(|e| e.task_id >= num_tasks) {
            return Err(Error::InvalidInput(format!(
                "task id {} out of range for {num_tasks} tasks",
                ev.task_id
            )));
        }
        if let Some(ev) = self.events.iter().find(|e| !(e.time_ms >= 0.0 && e.time_ms.is_finite())) {
            return Err(Error::InvalidInput(format!("bad arrival time {}", ev.time_ms)));
        }
        if self.events.is_empty() {
            return Ok(());
        }
        match self.segments.first() {
            Some(first) if first.start_index == 0 => {}
            _ => return Err(Error::InvalidInput("first segment must start at index 0".into())),
        }
        for pair in self.segments.windows(2) {
            if pair[1].start_index <= pair[0].start_index {
                return Err(Error::InvalidInput("segment starts must be strictly increasing".into()));
            }
        }
        if self.segments.last().map_or(false, |m| m.start_index >= self.events.len()) {
            return Err(Error::InvalidInput("segment starts past the last event".into()));
        }
        Ok(())
    }
}

/// Set of task ids a workload draws from uniformly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskMix(Vec<usize>);

impl TaskMix {
    pub fn uniform(num_tasks: usize) -> Self {
        Self((0..num_tasks).collect())
    }

    pub fn only(tasks: impl Into<Vec<usize>>) -> Result<Self> {
        let tasks = tasks.into();
        if tasks.is_empty() {
            return Err(Error::InvalidParameter("task mix must not be empty".into()));
        }
        Ok(Self(tasks))
    }

    pub fn tasks(&self) -> &[usize] {
        &self.0
    }

    pub(crate) fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.0[rng.random_range(0..self.0.len())]
    }
}
