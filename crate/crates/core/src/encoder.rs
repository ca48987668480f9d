//! Physics-informed hidden-state encoder.
//!
//! An encoder network maps an observation to a scalar estimate `ẑ` of the
//! thermal-mass temperature. It is trained jointly with a dynamics network
//! predicting the next room temperature and with the coefficients of a
//! first-order building model whose residual is penalised.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{AgentObservation, ExperienceBatch};
use crate::regress::{Adam, Mlp, Scaler, TrainConfig};
use crate::textio::{join, LineReader};

/// Which physics constraint shapes the latent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhysicsPrior {
    /// `T_r' = a11 T_r + a12 ẑ + b1 u + c11 T_a` and `ẑ' = a21 T_r + a22 ẑ`.
    Correct,
    /// `ẑ = ⌈T_r⌉`, a deliberately wrong constraint.
    Wrong,
}

impl PhysicsPrior {
    pub fn name(self) -> &'static str {
        match self {
            PhysicsPrior::Correct => "correct",
            PhysicsPrior::Wrong => "wrong",
        }
    }
}

/// Learnable coefficients of the first-order building model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub b1: f64,
    pub c11: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            a11: 0.9,
            a12: 0.05,
            a21: 0.05,
            a22: 0.95,
            b1: 0.1,
            c11: 0.05,
        }
    }
}

impl PhysicsParams {
    pub fn to_array(&self) -> [f64; 6] {
        [self.a11, self.a12, self.a21, self.a22, self.b1, self.c11]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        PhysicsParams {
            a11: v[0],
            a12: v[1],
            a21: v[2],
            a22: v[3],
            b1: v[4],
            c11: v[5],
        }
    }
}

/// Quantities entering one physics residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualInput {
    pub t_room: f64,
    pub t_room_next: f64,
    pub u_phys: f64,
    pub t_ambient: f64,
    pub z: f64,
    pub z_next: f64,
}

/// Physics residual: two components for the correct prior, one for the wrong one.
pub fn physics_residual(r: &ResidualInput, omega: &PhysicsParams, prior: PhysicsPrior) -> Vec<f64> {
    match prior {
        PhysicsPrior::Correct => vec![
            r.t_room_next
                - (omega.a11 * r.t_room + omega.a12 * r.z + omega.b1 * r.u_phys + omega.c11 * r.t_ambient),
            r.z_next - (omega.a21 * r.t_room + omega.a22 * r.z),
        ],
        PhysicsPrior::Wrong => vec![r.z - r.t_room.ceil()],
    }
}

/// Encoder input: room history, power history, ambient and the hour of day on the unit circle.
pub fn encoder_features(obs: &AgentObservation) -> Vec<f64> {
    let mut f = Vec::with_capacity(obs.t_room_history.len() + obs.u_phys_history.len() + 3);
    f.extend_from_slice(&obs.t_room_history);
    f.extend_from_slice(&obs.u_phys_history);
    f.push(obs.t_ambient);
    let phase = 2.0 * PI * (obs.timeslot % 24) as f64 / 24.0;
    f.push(phase.sin());
    f.push(phase.cos());
    f
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub encoder_hidden: Vec<usize>,
    pub dynamics_hidden: Vec<usize>,
    /// Weight of the physics loss.
    pub mu: f64,
    pub train: TrainConfig,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            encoder_hidden: vec![32, 32],
            dynamics_hidden: vec![128],
            mu: 1.0,
            train: TrainConfig {
                learning_rate: 0.001,
                batch_size: 64,
                max_epochs: 2000,
                patience: 100,
                min_rel_improvement: 1e-4,
                seed: 0,
            },
        }
    }
}

/// Encoder, dynamics network and physics coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBundle {
    pub prior: PhysicsPrior,
    pub mu: f64,
    pub omega: PhysicsParams,
    pub encoder: Mlp,
    pub encoder_scaler: Scaler,
    pub dynamics: Mlp,
    /// Centre and scale applied to `ẑ` and to `u_phys` before the dynamics network.
    pub z_norm: [f64; 2],
    pub u_norm: [f64; 2],
}

/// Loss terms of one evaluation; `total = pred + mu * phys`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub pred: f64,
    pub phys: f64,
    pub total: f64,
}

/// Flattened training arrays derived from a batch.
#[derive(Debug, Clone)]
pub struct EncoderData {
    pub width: usize,
    pub feats: Vec<f64>,
    pub feats_next: Vec<f64>,
    pub t_room: Vec<f64>,
    pub t_room_next: Vec<f64>,
    pub u_phys: Vec<f64>,
    pub t_ambient: Vec<f64>,
}

impl EncoderData {
    pub fn from_batch(batch: &ExperienceBatch) -> Result<Self> {
        let first = batch
            .transitions
            .first()
            .ok_or_else(|| Error::invalid("encoder training needs a non-empty batch"))?;
        let width = encoder_features(&first.obs).len();
        let n = batch.len();
        let mut d = EncoderData {
            width,
            feats: Vec::with_capacity(n * width),
            feats_next: Vec::with_capacity(n * width),
            t_room: Vec::with_capacity(n),
            t_room_next: Vec::with_capacity(n),
            u_phys: Vec::with_capacity(n),
            t_ambient: Vec::with_capacity(n),
        };
        for t in &batch.transitions {
            d.feats.extend(encoder_features(&t.obs));
            d.feats_next.extend(encoder_features(&t.next_obs));
            d.t_room.push(t.obs.t_room());
            d.t_room_next.push(t.next_obs.t_room());
            d.u_phys.push(t.u_phys);
            d.t_ambient.push(t.obs.t_ambient);
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.t_room.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_room.is_empty()
    }

    fn subset(&self, rows: &[usize]) -> EncoderData {
        let w = self.width;
        let pick = |v: &[f64]| rows.iter().map(|&r| v[r]).collect::<Vec<_>>();
        let pick_rows = |v: &[f64]| {
            let mut out = Vec::with_capacity(rows.len() * w);
            for &r in rows {
                out.extend_from_slice(&v[r * w..(r + 1) * w]);
            }
            out
        };
        EncoderData {
            width: w,
            feats: pick_rows(&self.feats),
            feats_next: pick_rows(&self.feats_next),
            t_room: pick(&self.t_room),
            t_room_next: pick(&self.t_room_next),
            u_phys: pick(&self.u_phys),
            t_ambient: pick(&self.t_ambient),
        }
    }
}

fn mean_std(v: &[f64]) -> [f64; 2] {
    let n = v.len().max(1) as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
    [m, if s > 1e-9 { s } else { 1.0 }]
}

/// Gradients with the same layout as the bundle's trainable parts.
struct Grads {
    encoder: Vec<f64>,
    dynamics: Vec<f64>,
    omega: [f64; 6],
}

impl EncoderBundle {
    /// Fresh bundle with He-initialised networks. The output biases start at the
    /// mean room temperature so that `ẑ` and the prediction begin in range.
    pub fn init(data: &EncoderData, cfg: &EncoderConfig, prior: PhysicsPrior) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let mut enc_sizes = vec![data.width];
        enc_sizes.extend_from_slice(&cfg.encoder_hidden);
        enc_sizes.push(1);
        let mut dyn_sizes = vec![data.width + 2];
        dyn_sizes.extend_from_slice(&cfg.dynamics_hidden);
        dyn_sizes.push(1);
        let mut encoder = Mlp::new(&enc_sizes, &mut rng)?;
        let mut dynamics = Mlp::new(&dyn_sizes, &mut rng)?;
        let z_norm = mean_std(&data.t_room);
        let u_norm = mean_std(&data.u_phys);
        let n = encoder.n_params();
        encoder.params[n - 1] = z_norm[0];
        let n = dynamics.n_params();
        dynamics.params[n - 1] = mean_std(&data.t_room_next)[0];
        Ok(EncoderBundle {
            prior,
            mu: cfg.mu,
            omega: PhysicsParams::default(),
            encoder,
            encoder_scaler: Scaler::fit(&data.feats, data.width),
            dynamics,
            z_norm,
            u_norm,
        })
    }

    pub fn encode(&self, obs: &AgentObservation) -> Result<f64> {
        let f = encoder_features(obs);
        if f.len() != self.encoder.n_inputs() {
            return Err(Error::Shape {
                expected: self.encoder.n_inputs(),
                got: f.len(),
                context: "encoder input",
            });
        }
        let x = self.encoder_scaler.transform(&f);
        Ok(self.encoder.forward(&x)?[0])
    }

    /// Encodes many observations at once.
    pub fn encode_batch(&self, obs: &[&AgentObservation]) -> Result<Vec<f64>> {
        let mut rows = Vec::with_capacity(obs.len() * self.encoder.n_inputs());
        for o in obs {
            let f = encoder_features(o);
            if f.len() != self.encoder.n_inputs() {
                return Err(Error::Shape {
                    expected: self.encoder.n_inputs(),
                    got: f.len(),
                    context: "encoder input",
                });
            }
            self.encoder_scaler.transform_into(&f, &mut rows);
        }
        Ok(self.encoder.forward_batch(&rows, obs.len()).output().to_vec())
    }

    /// Hash of everything frozen after the first training step (encoder and Ω).
    pub fn frozen_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in self
            .encoder
            .params
            .iter()
            .chain(&self.encoder_scaler.mean)
            .chain(&self.encoder_scaler.std)
            .chain(&self.omega.to_array())
        {
            h.write_u64(v.to_bits());
        }
        h.finish()
    }

    fn dynamics_input(&self, data: &EncoderData, feats_std: &[f64], z: &[f64]) -> Vec<f64> {
        let w = data.width;
        let mut x = Vec::with_capacity(data.len() * (w + 2));
        for i in 0..data.len() {
            x.extend_from_slice(&feats_std[i * w..(i + 1) * w]);
            x.push((z[i] - self.z_norm[0]) / self.z_norm[1]);
            x.push((data.u_phys[i] - self.u_norm[0]) / self.u_norm[1]);
        }
        x
    }

    /// Combined loss and, when requested, its gradient.
    fn loss_impl(&self, data: &EncoderData, want_grad: bool) -> (LossParts, Option<Grads>) {
        let n = data.len();
        let nf = n as f64;
        let w = data.width;
        let xs = self.encoder_scaler.transform(&data.feats);
        let xs_next = self.encoder_scaler.transform(&data.feats_next);
        let tape = self.encoder.forward_batch(&xs, n);
        let tape_next = self.encoder.forward_batch(&xs_next, n);
        let z = tape.output().to_vec();
        let z_next = tape_next.output().to_vec();
        let dyn_in = self.dynamics_input(data, &xs, &z);
        let dyn_tape = self.dynamics.forward_batch(&dyn_in, n);
        let pred = dyn_tape.output();

        let mut l_pred = 0.0;
        let mut d_pred = vec![0.0; n];
        for i in 0..n {
            let e = pred[i] - data.t_room_next[i];
            l_pred += e * e;
            d_pred[i] = 2.0 * e / nf;
        }
        l_pred /= nf;

        let o = &self.omega;
        let mut l_phys = 0.0;
        let mut dz = vec![0.0; n];
        let mut dz_next = vec![0.0; n];
        let mut g_omega = [0.0; 6];
        for i in 0..n {
            let r = physics_residual(
                &ResidualInput {
                    t_room: data.t_room[i],
                    t_room_next: data.t_room_next[i],
                    u_phys: data.u_phys[i],
                    t_ambient: data.t_ambient[i],
                    z: z[i],
                    z_next: z_next[i],
                },
                o,
                self.prior,
            );
            l_phys += r.iter().map(|v| v * v).sum::<f64>();
            if !want_grad {
                continue;
            }
            let k = self.mu * 2.0 / nf;
            match self.prior {
                PhysicsPrior::Correct => {
                    let (d1, d2) = (k * r[0], k * r[1]);
                    dz[i] += -o.a12 * d1 - o.a22 * d2;
                    dz_next[i] += d2;
                    g_omega[0] -= d1 * data.t_room[i];
                    g_omega[1] -= d1 * z[i];
                    g_omega[2] -= d2 * data.t_room[i];
                    g_omega[3] -= d2 * z[i];
                    g_omega[4] -= d1 * data.u_phys[i];
                    g_omega[5] -= d1 * data.t_ambient[i];
                }
                PhysicsPrior::Wrong => dz[i] += k * r[0],
            }
        }
        l_phys /= nf;
        let parts = LossParts {
            pred: l_pred,
            phys: l_phys,
            total: l_pred + self.mu * l_phys,
        };
        if !want_grad {
            return (parts, None);
        }
        let mut g_dyn = vec![0.0; self.dynamics.n_params()];
        let d_in = self
            .dynamics
            .backward(&dyn_tape, &d_pred, &mut g_dyn, true)
            .expect("input gradient requested");
        for i in 0..n {
            dz[i] += d_in[i * (w + 2) + w] / self.z_norm[1];
        }
        let mut g_enc = vec![0.0; self.encoder.n_params()];
        self.encoder.backward(&tape, &dz, &mut g_enc, false);
        self.encoder.backward(&tape_next, &dz_next, &mut g_enc, false);
        (
            parts,
            Some(Grads {
                encoder: g_enc,
                dynamics: g_dyn,
                omega: g_omega,
            }),
        )
    }

    pub fn loss(&self, data: &EncoderData) -> LossParts {
        self.loss_impl(data, false).0
    }

    /// Max relative error between the analytic gradient of the combined loss
    /// (encoder, dynamics and Ω) and central differences with h = 1e-5.
    pub fn grad_check(&self, data: &EncoderData) -> f64 {
        const H: f64 = 1e-5;
        let (_, g) = self.loss_impl(data, true);
        let g = g.expect("gradient requested");
        let mut probe = self.clone();
        let mut worst: f64 = 0.0;
        let mut check = |analytic: f64, set: &dyn Fn(&mut EncoderBundle, f64), orig: f64| {
            set(&mut probe, orig + H);
            let lp = probe.loss(data).total;
            set(&mut probe, orig - H);
            let lm = probe.loss(data).total;
            set(&mut probe, orig);
            let numeric = (lp - lm) / (2.0 * H);
            worst = worst.max(crate::regress::relative_error(analytic, numeric));
        };
        for i in 0..self.encoder.n_params() {
            check(g.encoder[i], &|b, v| b.encoder.params[i] = v, self.encoder.params[i]);
        }
        for i in 0..self.dynamics.n_params() {
            check(g.dynamics[i], &|b, v| b.dynamics.params[i] = v, self.dynamics.params[i]);
        }
        let om = self.omega.to_array();
        for i in 0..6 {
            check(
                g.omega[i],
                &|b, v| {
                    let mut a = b.omega.to_array();
                    a[i] = v;
                    b.omega = PhysicsParams::from_array(a);
                },
                om[i],
            );
        }
        worst
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::new();
        self.write_text(&mut s);
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut r = LineReader::new(&text, path);
        Self::read_text(&mut r)
    }

    pub(crate) fn write_text(&self, out: &mut String) {
        writeln!(out, "physq-encoder v1 {} {}", self.prior.name(), self.mu).unwrap();
        writeln!(out, "omega {}", join(&self.omega.to_array())).unwrap();
        writeln!(out, "norm {} {} {} {}", self.z_norm[0], self.z_norm[1], self.u_norm[0], self.u_norm[1]).unwrap();
        writeln!(out, "encoder_sizes {}", join(self.encoder.sizes())).unwrap();
        writeln!(out, "encoder_mean {}", join(&self.encoder_scaler.mean)).unwrap();
        writeln!(out, "encoder_std {}", join(&self.encoder_scaler.std)).unwrap();
        writeln!(out, "encoder_params {}", join(&self.encoder.params)).unwrap();
        writeln!(out, "dynamics_sizes {}", join(self.dynamics.sizes())).unwrap();
        writeln!(out, "dynamics_params {}", join(&self.dynamics.params)).unwrap();
    }

    pub(crate) fn read_text(r: &mut LineReader) -> Result<Self> {
        let head = r.expect("physq-encoder")?;
        if head.first() != Some(&"v1") {
            return Err(Error::Version {
                path: "encoder".into(),
                found: head.first().unwrap_or(&"").to_string(),
                expected: "v1",
            });
        }
        if head.len() != 3 {
            return Err(r.err("encoder header needs prior and mu"));
        }
        let prior = match head[1] {
            "correct" => PhysicsPrior::Correct,
            "wrong" => PhysicsPrior::Wrong,
            other => return Err(r.err(format!("unknown prior `{other}`"))),
        };
        let mu = r.parse(head[2])?;
        let f = r.expect("omega")?;
        let om: Vec<f64> = r.parse_all(&f)?;
        let om: [f64; 6] = om.try_into().map_err(|_| r.err("omega needs 6 values"))?;
        let f = r.expect("norm")?;
        let nm: Vec<f64> = r.parse_all(&f)?;
        if nm.len() != 4 {
            return Err(r.err("norm needs 4 values"));
        }
        let f = r.expect("encoder_sizes")?;
        let es: Vec<usize> = r.parse_all(&f)?;
        let f = r.expect("encoder_mean")?;
        let mean = r.parse_all(&f)?;
        let f = r.expect("encoder_std")?;
        let std = r.parse_all(&f)?;
        let f = r.expect("encoder_params")?;
        let encoder = Mlp::from_params(&es, r.parse_all(&f)?)?;
        let f = r.expect("dynamics_sizes")?;
        let ds: Vec<usize> = r.parse_all(&f)?;
        let f = r.expect("dynamics_params")?;
        let dynamics = Mlp::from_params(&ds, r.parse_all(&f)?)?;
        Ok(EncoderBundle {
            prior,
            mu,
            omega: PhysicsParams::from_array(om),
            encoder,
            encoder_scaler: Scaler { mean, std },
            dynamics,
            z_norm: [nm[0], nm[1]],
            u_norm: [nm[2], nm[3]],
        })
    }
}

/// Result of encoder training.
#[derive(Debug, Clone)]
pub struct EncoderFit {
    pub bundle: EncoderBundle,
    pub history: Vec<LossParts>,
}

/// Trains encoder, dynamics and Ω jointly with Adam on `L_pred + mu·L_phys`.
pub fn train_encoder(
    batch: &ExperienceBatch,
    cfg: &EncoderConfig,
    prior: PhysicsPrior,
) -> Result<EncoderFit> {
    let data = EncoderData::from_batch(batch)?;
    let bundle = EncoderBundle::init(&data, cfg, prior)?;
    train_encoder_from(bundle, &data, &cfg.train)
}

/// Continues training an existing bundle on prepared data.
pub fn train_encoder_from(
    mut bundle: EncoderBundle,
    data: &EncoderData,
    train: &TrainConfig,
) -> Result<EncoderFit> {
    train.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("encoder training needs a non-empty batch"));
    }
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0x5EED);
    let mut adam_e = Adam::new(bundle.encoder.n_params(), train.learning_rate);
    let mut adam_d = Adam::new(bundle.dynamics.n_params(), train.learning_rate);
    let mut adam_o = Adam::new(6, train.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let full = train.batch_size >= n;
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_bundle = bundle.clone();
    let mut since_best = 0;
    for epoch in 0..train.max_epochs {
        let start = bundle.clone();
        if !full {
            order.shuffle(&mut rng);
        }
        let mut sums = LossParts {
            pred: 0.0,
            phys: 0.0,
            total: 0.0,
        };
        for chunk in order.chunks(train.batch_size) {
            let sub;
            let d = if full {
                data
            } else {
                sub = data.subset(chunk);
                &sub
            };
            let (parts, g) = bundle.loss_impl(d, true);
            let g = g.expect("gradient requested");
            let share = chunk.len() as f64 / n as f64;
            sums.pred += parts.pred * share;
            sums.phys += parts.phys * share;
            sums.total += parts.total * share;
            adam_e.step(&mut bundle.encoder.params, &g.encoder);
            adam_d.step(&mut bundle.dynamics.params, &g.dynamics);
            let mut om = bundle.omega.to_array();
            adam_o.step(&mut om, &g.omega);
            bundle.omega = PhysicsParams::from_array(om);
        }
        if !sums.total.is_finite() {
            return Err(Error::Diverged(format!(
                "encoder loss became {} at epoch {epoch}",
                sums.total
            )));
        }
        history.push(sums);
        if sums.total < best * (1.0 - train.min_rel_improvement) {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if sums.total < best {
            best = sums.total;
            best_bundle = start;
        }
        if since_best >= train.patience {
            break;
        }
    }
    if !history.is_empty() && bundle.loss(data).total > best {
        bundle = best_bundle;
    }
    Ok(EncoderFit { bundle, history })
}

/// A batch paired with frozen-encoder estimates `(ẑ_i, ẑ_{i+1})` per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedBatch {
    pub batch: ExperienceBatch,
    pub latent: Vec<[f64; 2]>,
}

/// Annotates every transition with the frozen encoder's estimates.
pub fn freeze_and_annotate(bundle: &EncoderBundle, batch: &ExperienceBatch) -> Result<AnnotatedBatch> {
    let obs: Vec<&AgentObservation> = batch.transitions.iter().map(|t| &t.obs).collect();
    let next: Vec<&AgentObservation> = batch.transitions.iter().map(|t| &t.next_obs).collect();
    let z = bundle.encode_batch(&obs)?;
    let zn = bundle.encode_batch(&next)?;
    Ok(AnnotatedBatch {
        batch: batch.clone(),
        latent: z.into_iter().zip(zn).map(|(a, b)| [a, b]).collect(),
    })
}
