//! Two-layer perceptron `Q(x) = W2ᵀ relu(W1ᵀ x + b1) + b2` with hand-written
//! backpropagation.
//!
//! Parameters live in one flat vector laid out as
//! `[W1 (input × hidden, row-major), b1, W2 (hidden × outputs, row-major), b2]`,
//! which is also the checkpoint order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Quadratic within a residual of 1, linear beyond.
    #[default]
    Huber,
    Squared,
}

impl LossKind {
    fn value_and_slope(self, residual: f64) -> (f64, f64) {
        match self {
            LossKind::Huber if residual.abs() > 1.0 => (residual.abs() - 0.5, residual.signum()),
            _ => (0.5 * residual * residual, residual),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    input_dim: usize,
    hidden: usize,
    outputs: usize,
    params: Vec<f64>,
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Reusable activations for batched passes.
#[derive(Debug, Clone, Default)]
pub struct BatchScratch {
    hidden: Vec<f64>,
    q: Vec<f64>,
    w2t: Vec<f64>,
    qacc: Vec<f64>,
    gw2t: Vec<f64>,
    dh: Vec<f64>,
}

impl BatchScratch {
    /// Q-values of the last forward pass, `rows × outputs` row-major.
    pub fn q(&self) -> &[f64] {
        &self.q
    }
}

impl QNetwork {
    /// He-style uniform init, bound `sqrt(6 / fan_in)`, zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden, outputs);
        let b1 = (6.0 / input_dim as f64).sqrt();
        let b2 = (6.0 / hidden as f64).sqrt();
        let (w1, rest) = net.params.split_at_mut(input_dim * hidden);
        for w in w1 {
            *w = rng.random_range(-b1..b1);
        }
        for w in &mut rest[hidden..hidden + hidden * outputs] {
            *w = rng.random_range(-b2..b2);
        }
        net
    }

    pub fn zeros(input_dim: usize, hidden: usize, outputs: usize) -> Self {
        let len = input_dim * hidden + hidden + hidden * outputs + outputs;
        Self { input_dim, hidden, outputs, params: vec![0.0; len] }
    }

    pub fn from_params(input_dim: usize, hidden: usize, outputs: usize, params: Vec<f64>) -> Result<Self> {
        let net = Self::zeros(input_dim, hidden, outputs);
        if params.len() != net.params.len() {
            return Err(Error::Dimension(format!(
                "{} parameters for a {input_dim}x{hidden}x{outputs} network (need {})",
                params.len(),
                net.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self { params, ..net })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn copy_from(&mut self, other: &QNetwork) {
        assert_eq!(self.params.len(), other.params.len());
        self.params.copy_from_slice(&other.params);
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = self.input_dim * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.outputs;
        [w1, b1, w2, b2]
    }

    /// `(W1, b1, W2, b2)` views.
    pub fn layers(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let [_, b1, w2, b2] = self.offsets();
        let (w1s, rest) = self.params.split_at(b1);
        let (b1s, rest) = rest.split_at(w2 - b1);
        let (w2s, b2s) = rest.split_at(b2 - w2);
        (w1s, b1s, w2s, b2s)
    }

    pub fn layers_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let [_, b1, w2, b2] = self.offsets();
        let (w1s, rest) = self.params.split_at_mut(b1);
        let (b1s, rest) = rest.split_at_mut(w2 - b1);
        let (w2s, b2s) = rest.split_at_mut(b2 - w2);
        (w1s, b1s, w2s, b2s)
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        self.layers_mut().3
    }

    /// Action values for one encoded state.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut hidden = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.outputs];
        self.forward_into(x, &mut hidden, &mut out)?;
        Ok(out)
    }

    /// Allocation-free single-row forward pass.
    pub fn forward_into(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension(format!("input of {} for input dim {}", x.len(), self.input_dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let (w1, b1, w2, b2) = self.layers();
        hidden.copy_from_slice(b1);
        for (xi, row) in x.iter().zip(w1.chunks_exact(self.hidden)) {
            if *xi != 0.0 {
                for (h, w) in hidden.iter_mut().zip(row) {
                    *h += xi * w;
                }
            }
        }
        out.copy_from_slice(b2);
        for (h, row) in hidden.iter_mut().zip(w2.chunks_exact(self.outputs)) {
            *h = h.max(0.0);
            if *h > 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += *h * w;
                }
            }
        }
        Ok(())
    }

    /// `W2` transposed to `outputs × hidden` so each output is one dot product.
    fn transpose_w2(&self, w2t: &mut Vec<f64>) {
        let w2 = self.layers().2;
        w2t.resize(self.hidden * self.outputs, 0.0);
        for (k, row) in w2.chunks_exact(self.outputs).enumerate() {
            for (j, w) in row.iter().enumerate() {
                w2t[j * self.hidden + k] = *w;
            }
        }
    }

    /// One input row through both layers, hidden units in register-sized
    /// blocks so the activations never round-trip through memory.
    /// `qacc` holds `outputs × LANES` partial sums.
    fn row_pass(&self, w2t: &[f64], qacc: &mut [f64], x: &[f64], h: &mut [f64], q: &mut [f64]) {
        const LANES: usize = 8;
        let (w1, b1, _, b2) = self.layers();
        let hid = self.hidden;
        qacc.fill(0.0);
        let full = hid - hid % LANES;
        for c in (0..full).step_by(LANES) {
            let mut acc = [0.0; LANES];
            acc.copy_from_slice(&b1[c..c + LANES]);
            for (k, xi) in x.iter().enumerate() {
                if *xi != 0.0 {
                    let w = &w1[k * hid + c..k * hid + c + LANES];
                    for l in 0..LANES {
                        acc[l] += xi * w[l];
                    }
                }
            }
            for a in &mut acc {
                *a = a.max(0.0);
            }
            h[c..c + LANES].copy_from_slice(&acc);
            for (qa, col) in qacc.chunks_exact_mut(LANES).zip(w2t.chunks_exact(hid)) {
                let w = &col[c..c + LANES];
                for l in 0..LANES {
                    qa[l] += acc[l] * w[l];
                }
            }
        }
        for (o, (qa, (b, col))) in q.iter_mut().zip(qacc.chunks_exact(LANES).zip(b2.iter().zip(w2t.chunks_exact(hid)))) {
            let mut tail = 0.0;
            for k in full..hid {
                let mut v = b1[k];
                for (i, xi) in x.iter().enumerate() {
                    v += xi * w1[i * hid + k];
                }
                h[k] = v.max(0.0);
                tail += h[k] * col[k];
            }
            *o = b + ((qa[0] + qa[1]) + (qa[2] + qa[3])) + ((qa[4] + qa[5]) + (qa[6] + qa[7])) + tail;
        }
    }

    /// Batched forward over `rows` inputs stored row-major in `x`; results
    /// land in `scratch.q()`.
    pub fn forward_batch(&self, x: &[f64], rows: usize, scratch: &mut BatchScratch) {
        assert_eq!(x.len(), rows * self.input_dim);
        self.transpose_w2(&mut scratch.w2t);
        scratch.qacc.resize(self.outputs * 8, 0.0);
        scratch.hidden.resize(self.hidden, 0.0);
        scratch.q.resize(rows * self.outputs, 0.0);
        for (xr, qr) in x.chunks_exact(self.input_dim).zip(scratch.q.chunks_exact_mut(self.outputs)) {
            self.row_pass(&scratch.w2t, &mut scratch.qacc, xr, &mut scratch.hidden, qr);
        }
    }

    /// Mean regression loss of `Q(x_i)[a_i]` against `targets[i]`, writing the
    /// exact gradient with respect to every parameter into `grad`.
    ///
    /// Only the taken action's output carries a residual, so each row's
    /// backward pass touches one column of `W2`.
    pub fn loss_and_gradient(
        &self,
        x: &[f64],
        actions: &[usize],
        targets: &[f64],
        loss: LossKind,
        scratch: &mut BatchScratch,
        grad: &mut Vec<f64>,
    ) -> f64 {
        let rows = actions.len();
        assert_eq!(targets.len(), rows);
        assert_eq!(x.len(), rows * self.input_dim);
        assert!(rows > 0);
        let (h_dim, o_dim) = (self.hidden, self.outputs);
        self.transpose_w2(&mut scratch.w2t);
        scratch.qacc.resize(self.outputs * 8, 0.0);
        scratch.hidden.resize(h_dim, 0.0);
        scratch.dh.resize(h_dim, 0.0);
        scratch.q.resize(rows * o_dim, 0.0);
        scratch.gw2t.clear();
        scratch.gw2t.resize(h_dim * o_dim, 0.0);

        grad.clear();
        grad.resize(self.params.len(), 0.0);
        let [_, ob1, ow2, ob2] = self.offsets();
        let (gw1, rest) = grad.split_at_mut(ob1);
        let (gb1, rest) = rest.split_at_mut(ow2 - ob1);
        let (gw2, gb2) = rest.split_at_mut(ob2 - ow2);

        let scale = 1.0 / rows as f64;
        let mut total = 0.0;
        let rows_iter = x.chunks_exact(self.input_dim).zip(scratch.q.chunks_exact_mut(o_dim));
        for ((xr, qr), (&a, &y)) in rows_iter.zip(actions.iter().zip(targets)) {
            let h = &mut scratch.hidden;
            self.row_pass(&scratch.w2t, &mut scratch.qacc, xr, h, qr);
            let (value, slope) = loss.value_and_slope(qr[a] - y);
            total += value;
            let g = slope * scale;
            if g == 0.0 {
                continue;
            }
            gb2[a] += g;
            axpy(g, h, &mut scratch.gw2t[a * h_dim..(a + 1) * h_dim]);
            let w2a = &scratch.w2t[a * h_dim..(a + 1) * h_dim];
            for ((d, hv), w) in scratch.dh.iter_mut().zip(h.iter()).zip(w2a) {
                *d = if *hv > 0.0 { g * w } else { 0.0 };
            }
            axpy(1.0, &scratch.dh, gb1);
            for (xi, grow) in xr.iter().zip(gw1.chunks_exact_mut(h_dim)) {
                if *xi != 0.0 {
                    axpy(*xi, &scratch.dh, grow);
                }
            }
        }
        for (k, row) in gw2.chunks_exact_mut(o_dim).enumerate() {
            for (j, gv) in row.iter_mut().enumerate() {
                *gv = scratch.gw2t[j * h_dim + k];
            }
        }
        total * scale
    }
}

/// Loss and exact parameter gradient over `(encoded, action, td_target)` rows.
pub fn q_gradient(net: &QNetwork, batch: &[(Vec<f64>, usize, f64)], loss: LossKind) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty gradient batch".into()));
    }
    let mut x = Vec::with_capacity(batch.len() * net.input_dim());
    let mut actions = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for (enc, a, y) in batch {
        if enc.len() != net.input_dim() {
            return Err(Error::Dimension(format!("input of {} for input dim {}", enc.len(), net.input_dim())));
        }
        if *a >= net.outputs() {
            return Err(Error::InvalidInput(format!("action {a} out of range")));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("td target"));
        }
        if enc.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        x.extend_from_slice(enc);
        actions.push(*a);
        targets.push(*y);
    }
    let mut grad = Vec::new();
    let value = net.loss_and_gradient(&x, &actions, &targets, loss, &mut BatchScratch::default(), &mut grad);
    Ok((grad, value))
}
