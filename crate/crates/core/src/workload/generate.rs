use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};

use super::{ArrivalEvent, SegmentMark, TaskMix, WorkloadTrace};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

/// Request count of each unpredictable workload.
pub const UNPREDICTABLE_REQUESTS: usize = 10_000;

/// Draws from the geometric distribution on {1, 2, ...} with the given mean.
pub fn shifted_geometric<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 1.0 {
        return 1;
    }
    let geo = Geometric::new(1.0 / mean).expect("probability in (0, 1)");
    1 + geo.sample(rng)
}

fn exp_ms(rate_per_s: f64) -> Exp<f64> {
    Exp::new(rate_per_s / 1000.0).expect("positive rate")
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("arrival rate must be positive, got {rate}")))
    }
}

/// Fixed-rate Poisson segments of `hold_seconds` each, back to back.
///
/// Segment `k` covers `[k * hold, (k + 1) * hold)` ms. A segment that happens
/// to draw no arrivals gets no mark.
pub fn gen_stable(
    rates: &[f64],
    hold_seconds: f64,
    tasks: &TaskMix,
    seed: u64,
) -> Result<WorkloadTrace> {
    if !(hold_seconds > 0.0 && hold_seconds.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "hold time must be positive, got {hold_seconds}"
        )));
    }
    for &r in rates {
        check_rate(r)?;
    }
    let mut rng = rng_from_seed(seed);
    let hold_ms = hold_seconds * 1000.0;
    let mut trace = WorkloadTrace { seed, ..Default::default() };
    for (k, &rate) in rates.iter().enumerate() {
        let start = k as f64 * hold_ms;
        let end = start + hold_ms;
        let gaps = exp_ms(rate);
        let first = trace.events.len();
        let mut t = start + gaps.sample(&mut rng);
        while t < end {
            trace.events.push(ArrivalEvent { time_ms: t, task_id: tasks.sample(&mut rng) });
            t += gaps.sample(&mut rng);
        }
        if trace.events.len() > first {
            trace.segments.push(SegmentMark { start_index: first, rate });
        }
    }
    Ok(trace)
}

fn gen_segmented(
    n_requests: usize,
    tasks: &TaskMix,
    seed: u64,
    mut regime: impl FnMut(&mut SimRng) -> (f64, u64),
) -> Result<WorkloadTrace> {
    if n_requests == 0 {
        return Err(Error::InvalidParameter("n_requests must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut trace = WorkloadTrace {
        events: Vec::with_capacity(n_requests),
        segments: Vec::new(),
        seed,
    };
    let mut t = 0.0;
    while trace.events.len() < n_requests {
        let (rate, count) = regime(&mut rng);
        trace.segments.push(SegmentMark { start_index: trace.events.len(), rate });
        let gaps = exp_ms(rate);
        let count = (count as usize).min(n_requests - trace.events.len());
        for _ in 0..count {
            t += gaps.sample(&mut rng);
            trace.events.push(ArrivalEvent { time_ms: t, task_id: tasks.sample(&mut rng) });
        }
    }
    Ok(trace)
}

/// Rate bands of the time-based unpredictable workload: (probability, low, high).
pub(crate) const TIME_BASED_BANDS: [(f64, f64, f64); 3] =
    [(0.90, 0.25, 2.0), (0.08, 2.0, 40.0), (0.02, 40.0, 48.0)];

/// Workload whose regimes hold for a shifted-geometric number of requests
/// with mean `20 * rate`, so every regime lasts about 20 s in expectation.
pub fn gen_unpredictable_time_based(
    n_requests: usize,
    tasks: &TaskMix,
    seed: u64,
) -> Result<WorkloadTrace> {
    gen_segmented(n_requests, tasks, seed, |rng| {
        let u: f64 = rng.random();
        let (_, lo, hi) = if u < TIME_BASED_BANDS[0].0 {
            TIME_BASED_BANDS[0]
        } else if u < TIME_BASED_BANDS[0].0 + TIME_BASED_BANDS[1].0 {
            TIME_BASED_BANDS[1]
        } else {
            TIME_BASED_BANDS[2]
        };
        let rate = rng.random_range(lo..hi);
        (rate, shifted_geometric(20.0 * rate, rng))
    })
}

/// Workload with rates uniform in [1, 48] req/s, each held for a
/// shifted-geometric number of requests with mean 500.
pub fn gen_unpredictable_request_based(
    n_requests: usize,
    tasks: &TaskMix,
    seed: u64,
) -> Result<WorkloadTrace> {
    gen_segmented(n_requests, tasks, seed, |rng| {
        let rate = rng.random_range(1.0..48.0);
        (rate, shifted_geometric(500.0, rng))
    })
}

/// Parameters of the open-ended training arrival process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingWorkloadSpec {
    pub rate_min: f64,
    pub rate_max: f64,
    /// Mean requests per rate regime (shifted geometric).
    pub mean_regime_requests: f64,
}

impl Default for TrainingWorkloadSpec {
    fn default() -> Self {
        Self { rate_min: 0.25, rate_max: 48.0, mean_regime_requests: 100.0 }
    }
}

/// Next training arrival plus the regime it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingArrival {
    pub time_ms: f64,
    pub task_id: usize,
    pub rate: f64,
    pub new_regime: bool,
}

/// Endless arrival stream that switches between log-uniform random rates.
#[derive(Debug, Clone)]
pub struct TrainingWorkload {
    spec: TrainingWorkloadSpec,
    tasks: TaskMix,
    rng: SimRng,
    clock_ms: f64,
    rate: f64,
    remaining: u64,
}

impl TrainingWorkload {
    pub fn new(spec: TrainingWorkloadSpec, tasks: TaskMix, seed: u64) -> Result<Self> {
        check_rate(spec.rate_min)?;
        check_rate(spec.rate_max)?;
        if spec.rate_max < spec.rate_min {
            return Err(Error::InvalidParameter("rate_max below rate_min".into()));
        }
        if !(spec.mean_regime_requests >= 1.0) {
            return Err(Error::InvalidParameter("mean_regime_requests must be >= 1".into()));
        }
        Ok(Self { spec, tasks, rng: rng_from_seed(seed), clock_ms: 0.0, rate: 0.0, remaining: 0 })
    }

    pub fn next_arrival(&mut self) -> TrainingArrival {
        let new_regime = self.remaining == 0;
        if new_regime {
            let (lo, hi) = (self.spec.rate_min.ln(), self.spec.rate_max.ln());
            self.rate = if hi > lo { self.rng.random_range(lo..hi).exp() } else { self.spec.rate_min };
            self.remaining = shifted_geometric(self.spec.mean_regime_requests, &mut self.rng);
        }
        self.remaining -= 1;
        self.clock_ms += exp_ms(self.rate).sample(&mut self.rng);
        TrainingArrival {
            time_ms: self.clock_ms,
            task_id: self.tasks.sample(&mut self.rng),
            rate: self.rate,
            new_regime,
        }
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }
}
