//! Fully connected ReLU networks with a flat parameter vector, Adam and a
//! finite-difference gradient check.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Multilayer perceptron: ReLU on hidden layers, identity on the output.
///
/// Parameters live in one flat vector. Layer `l` stores its weight matrix
/// row-major as `[input][output]` followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Intermediate activations of a batched forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Tape {
    n: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l` (post-ReLU for hidden layers).
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has the input at least")
    }

    pub fn rows(&self) -> usize {
        self.n
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// He-initialised weights; biases start at a small positive constant so
    /// that no unit begins exactly on the ReLU kink.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut m = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let dist = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive std");
            for p in &mut m.params[off..off + n_in * n_out] {
                *p = dist.sample(rng);
            }
            for p in &mut m.params[off + n_in * n_out..off + n_in * n_out + n_out] {
                *p = 0.01;
            }
            off += n_in * n_out + n_out;
        }
        Ok(m)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(sizes)?;
        if params.len() != m.params.len() {
            return Err(Error::Shape {
                expected: m.params.len(),
                got: params.len(),
                context: "mlp parameter count",
            });
        }
        m.params = params;
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        offs
    }

    /// Offset of the last layer's weights and its bias within `params`.
    pub(crate) fn output_layer(&self) -> (usize, usize) {
        let offs = self.layer_offsets();
        let l = offs.len() - 1;
        let n_in = self.sizes[l];
        let n_out = self.sizes[l + 1];
        (offs[l], offs[l] + n_in * n_out)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_inputs() {
            return Err(Error::Shape {
                expected: self.n_inputs(),
                got: x.len(),
                context: "mlp input",
            });
        }
        Ok(self.forward_batch(x, 1).output().to_vec())
    }

    /// Forward pass over `n` row-major samples.
    pub fn forward_batch(&self, x: &[f64], n: usize) -> Tape {
        debug_assert_eq!(x.len(), n * self.n_inputs());
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &acts[l];
            let mut out = Vec::with_capacity(n * n_out);
            for _ in 0..n {
                out.extend_from_slice(b);
            }
            gemm(n, n_in, n_out, input, (n_in, 1), w, (n_out, 1), &mut out);
            if l + 1 < n_layers {
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Tape { n, acts }
    }

    /// Accumulates parameter gradients into `grads` given `d_out = dL/d(output)`.
    /// Returns `dL/d(input)` when `want_input` is set.
    pub fn backward(
        &self,
        tape: &Tape,
        d_out: &[f64],
        grads: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let n = tape.n;
        let n_layers = self.sizes.len() - 1;
        let offs = self.layer_offsets();
        let mut delta = d_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offs[l];
            let w = &self.params[off..off + n_in * n_out];
            let input = &tape.acts[l];
            {
                let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for d in delta.chunks(n_out) {
                    for (g, dv) in gb.iter_mut().zip(d) {
                        *g += dv;
                    }
                }
                // gW += Xᵀ δ
                gemm(n_in, n, n_out, input, (1, n_in), &delta, (n_out, 1), gw);
            }
            if l == 0 && !want_input {
                return None;
            }
            let mut d_in = vec![0.0; n * n_in];
            // dX = δ Wᵀ
            gemm(n, n_out, n_in, &delta, (n_out, 1), w, (1, n_out), &mut d_in);
            if l > 0 {
                // hidden inputs clamped by ReLU pass no gradient
                for (g, &a) in d_in.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = d_in;
        }
        Some(delta)
    }
}

/// `c[m×n] += a[m×k] · b[k×n]` with (row, column) strides for `a` and `b`;
/// `c` is dense row-major.
fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize), c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    // SAFETY: the assertion above keeps every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), sa.0 as isize, sa.1 as isize,
            b.as_ptr(), sb.0 as isize, sb.1 as isize,
            1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Adam optimiser state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Optimisation settings shared by all network fits.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a relative improvement of `min_rel_improvement`.
    pub patience: usize,
    pub min_rel_improvement: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 2048,
            max_epochs: 500,
            patience: 20,
            min_rel_improvement: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::invalid("learning rate and batch size must be positive"));
        }
        Ok(())
    }
}

/// Fits `model` by mini-batch Adam on the (optionally masked) mean squared error.
///
/// `inputs` is `n × n_inputs`, `targets` and `mask` are `n × n_outputs`.
/// The masked loss is `Σ mask·(pred − y)² / Σ mask`. Returns the per-epoch
/// training loss; the parameters of the best epoch are kept.
pub fn mlp_fit(
    model: &mut Mlp,
    inputs: &[f64],
    targets: &[f64],
    mask: Option<&[f64]>,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let d = model.n_inputs();
    let o = model.n_outputs();
    if d == 0 || inputs.len() % d != 0 || inputs.is_empty() {
        return Err(Error::Shape {
            expected: d,
            got: inputs.len(),
            context: "mlp_fit inputs",
        });
    }
    let n = inputs.len() / d;
    if targets.len() != n * o {
        return Err(Error::Shape {
            expected: n * o,
            got: targets.len(),
            context: "mlp_fit targets",
        });
    }
    if let Some(m) = mask {
        if m.len() != n * o {
            return Err(Error::Shape {
                expected: n * o,
                got: m.len(),
                context: "mlp_fit mask",
            });
        }
    }
    if let Some(bad) = targets.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "training target",
            value: *bad,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.n_params(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_params = model.params.clone();
    let mut since_best = 0;
    let mut grads = vec![0.0; model.n_params()];
    let full_batch = cfg.batch_size >= n;
    let weight_total: f64 = mask.map_or((n * o) as f64, |m| m.iter().sum());
    if weight_total <= 0.0 {
        return Err(Error::invalid("mask selects no outputs"));
    }
    let mut xb = Vec::new();
    let mut yb = Vec::new();
    let mut mb = Vec::new();
    for epoch in 0..cfg.max_epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let start_params = model.params.clone();
        for chunk in order.chunks(cfg.batch_size) {
            let bn = chunk.len();
            let (x, y, m): (&[f64], &[f64], Option<&[f64]>) = if full_batch {
                (inputs, targets, mask)
            } else {
                xb.clear();
                yb.clear();
                mb.clear();
                for &r in chunk {
                    xb.extend_from_slice(&inputs[r * d..(r + 1) * d]);
                    yb.extend_from_slice(&targets[r * o..(r + 1) * o]);
                    if let Some(mk) = mask {
                        mb.extend_from_slice(&mk[r * o..(r + 1) * o]);
                    }
                }
                (&xb, &yb, mask.map(|_| mb.as_slice()))
            };
            let w_batch: f64 = m.map_or((bn * o) as f64, |m| m.iter().sum());
            if w_batch <= 0.0 {
                continue;
            }
            let tape = model.forward_batch(x, bn);
            let pred = tape.output();
            let mut d_out = vec![0.0; bn * o];
            let mut loss = 0.0;
            for j in 0..bn * o {
                let wj = m.map_or(1.0, |m| m[j]);
                let e = pred[j] - y[j];
                loss += wj * e * e;
                d_out[j] = 2.0 * wj * e / w_batch;
            }
            epoch_loss += loss;
            grads.iter_mut().for_each(|g| *g = 0.0);
            model.backward(&tape, &d_out, &mut grads, false);
            adam.step(&mut model.params, &grads);
        }
        // loss of the parameters seen during the epoch, normalised by the full weight
        let epoch_loss = epoch_loss / weight_total;
        if !epoch_loss.is_finite() {
            model.params = best_params;
            return Err(Error::Diverged(format!(
                "loss became {epoch_loss} at epoch {epoch}"
            )));
        }
        history.push(epoch_loss);
        if epoch_loss < best * (1.0 - cfg.min_rel_improvement) {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if epoch_loss < best {
            best = epoch_loss;
            best_params = start_params;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    if !history.is_empty() {
        // the recorded loss of an epoch belongs to the parameters before its last step
        let final_loss = mse(model, inputs, targets, mask, weight_total);
        if final_loss > best {
            model.params = best_params;
        }
    }
    Ok(history)
}

fn mse(model: &Mlp, inputs: &[f64], targets: &[f64], mask: Option<&[f64]>, total: f64) -> f64 {
    let n = inputs.len() / model.n_inputs();
    let tape = model.forward_batch(inputs, n);
    let mut loss = 0.0;
    for (j, (p, y)) in tape.output().iter().zip(targets).enumerate() {
        let wj = mask.map_or(1.0, |m| m[j]);
        loss += wj * (p - y) * (p - y);
    }
    loss / total
}

/// Squared-error loss `Σ (f(x) − y)²` of one sample and its analytic gradient.
pub fn sample_loss_and_grad(model: &Mlp, x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let tape = model.forward_batch(x, 1);
    let pred = tape.output();
    let mut d_out = vec![0.0; pred.len()];
    let mut loss = 0.0;
    for j in 0..pred.len() {
        let e = pred[j] - y[j];
        loss += e * e;
        d_out[j] = 2.0 * e;
    }
    let mut grads = vec![0.0; model.n_params()];
    model.backward(&tape, &d_out, &mut grads, false);
    (loss, grads)
}

/// Relative error used by gradient checks: `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Max relative error between analytic and central-difference (h = 1e-5)
/// gradients of the squared error on one sample.
pub fn grad_check(model: &Mlp, x: &[f64], y: &[f64]) -> f64 {
    const H: f64 = 1e-5;
    let (_, analytic) = sample_loss_and_grad(model, x, y);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.n_params() {
        let orig = probe.params[i];
        probe.params[i] = orig + H;
        let (lp, _) = sample_loss_and_grad(&probe, x, y);
        probe.params[i] = orig - H;
        let (lm, _) = sample_loss_and_grad(&probe, x, y);
        probe.params[i] = orig;
        let numeric = (lp - lm) / (2.0 * H);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Per-feature standardisation. Constant features get unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[f64], width: usize) -> Self {
        let n = (rows.len() / width.max(1)).max(1) as f64;
        let mut mean = vec![0.0; width];
        for r in rows.chunks(width) {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows.chunks(width) {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-9 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, std }
    }

    pub fn identity(width: usize) -> Self {
        Scaler {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn transform_into(&self, row: &[f64], out: &mut Vec<f64>) {
        out.extend(
            row.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }

    pub fn transform(&self, rows: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len());
        for r in rows.chunks(self.mean.len()) {
            self.transform_into(r, &mut out);
        }
        out
    }
}
