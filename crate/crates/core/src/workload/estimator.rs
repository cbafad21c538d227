use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_PRIOR_RATE: f64 = 1.0;
/// Upper clamp for estimates built from (near-)simultaneous arrivals.
const MAX_RATE: f64 = 1.0e4;

/// Where the router's arrival-rate feature comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    /// The generator's declared segment rate.
    TrueRate,
    /// Online estimate from recent arrivals.
    Estimated,
}

/// How a window of arrival timestamps becomes a rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Reciprocal of the mean gap between the windowed arrivals.
    #[default]
    MeanGap,
    /// Mean of per-gap instantaneous rates.
    MeanInverseGap,
}

/// Serializable estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Arrival timestamps kept; the rate uses the gaps between them.
    pub window: usize,
    /// Returned until two arrivals have been seen.
    pub prior_rate: f64,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self { kind: EstimatorKind::MeanGap, window: DEFAULT_WINDOW, prior_rate: DEFAULT_PRIOR_RATE }
    }
}

impl EstimatorSpec {
    pub fn build(&self, mode: RateMode) -> Result<RateEstimator> {
        RateEstimator::with_params(mode, self.kind, self.window, self.prior_rate)
    }
}

/// Running estimate over the last `window` arrival timestamps.
#[derive(Debug, Clone)]
pub struct RateEstimator {
    window: VecDeque<f64>,
    capacity: usize,
    mode: RateMode,
    kind: EstimatorKind,
    prior_rate: f64,
}

impl RateEstimator {
    pub fn new(mode: RateMode) -> Self {
        Self::with_params(mode, EstimatorKind::MeanGap, DEFAULT_WINDOW, DEFAULT_PRIOR_RATE)
            .expect("default parameters are valid")
    }

    pub fn with_params(
        mode: RateMode,
        kind: EstimatorKind,
        window: usize,
        prior_rate: f64,
    ) -> Result<Self> {
        if window < 2 {
            return Err(Error::InvalidParameter("rate window needs at least 2 arrivals".into()));
        }
        if !(prior_rate > 0.0 && prior_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("prior rate must be positive, got {prior_rate}")));
        }
        Ok(Self { window: VecDeque::with_capacity(window), capacity: window, mode, kind, prior_rate })
    }

    pub fn mode(&self) -> RateMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: RateMode) {
        self.mode = mode;
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Records an arrival and returns the current rate in requests/second.
    ///
    /// `true_rate` is returned unchanged in [`RateMode::TrueRate`]; the
    /// arrival is still recorded so the mode can switch mid-stream.
    pub fn observe(&mut self, now_ms: f64, true_rate: f64) -> Result<f64> {
        if let Some(&last) = self.window.back() {
            if now_ms < last {
                return Err(Error::InvalidInput(format!(
                    "arrival at {now_ms} ms precedes previous arrival at {last} ms"
                )));
            }
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(now_ms);
        Ok(match self.mode {
            RateMode::TrueRate => true_rate,
            RateMode::Estimated => self.estimate(),
        })
    }

    /// Current estimate without recording anything.
    pub fn estimate(&self) -> f64 {
        let n = self.window.len();
        if n < 2 {
            return self.prior_rate;
        }
        let rate = match self.kind {
            EstimatorKind::MeanGap => {
                let mean_gap_ms = (self.window[n - 1] - self.window[0]) / (n - 1) as f64;
                1000.0 / mean_gap_ms
            }
            EstimatorKind::MeanInverseGap => {
                let sum: f64 = self
                    .window
                    .iter()
                    .zip(self.window.iter().skip(1))
                    .map(|(a, b)| 1000.0 / (b - a))
                    .map(|r| r.min(MAX_RATE))
                    .sum();
                sum / (n - 1) as f64
            }
        };
        rate.min(MAX_RATE)
    }
}
