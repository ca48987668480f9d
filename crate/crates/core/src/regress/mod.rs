//! Supervised regressors used as Q-function approximators.

mod lookup;
mod mlp;
mod trees;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use lookup::LookupTable;
pub use mlp::{
    grad_check, mlp_fit, relative_error, sample_loss_and_grad, Adam, Mlp, Scaler, Tape,
    TrainConfig,
};
pub use trees::{trees_fit, ExtraTrees, Node, Tree, TreeParams};

use crate::error::{Error, Result};
use crate::textio::{join, LineReader};

/// How to build a fresh Q approximator.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorSpec {
    /// Network with one output per action, trained on the taken action only.
    Mlp { hidden: Vec<usize>, train: TrainConfig },
    /// Extra-trees with the action appended as an input feature.
    ExtraTrees(TreeParams),
    Lookup,
}

impl RegressorSpec {
    pub fn fqi_nn() -> Self {
        RegressorSpec::Mlp {
            hidden: vec![48, 48],
            train: TrainConfig {
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
        }
    }

    pub fn physq_q() -> Self {
        RegressorSpec::Mlp {
            hidden: vec![32, 32],
            train: TrainConfig {
                learning_rate: 0.001,
                ..TrainConfig::default()
            },
        }
    }

    pub fn fqi_et() -> Self {
        RegressorSpec::ExtraTrees(TreeParams::default())
    }
}

/// Network Q-model in raw feature and target units.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpQ {
    pub scaler: Scaler,
    pub target_mean: f64,
    pub target_scale: f64,
    pub net: Mlp,
}

/// A fitted approximator returning one value per binary action.
#[derive(Debug, Clone, PartialEq)]
pub enum QModel {
    Constant(f64),
    Mlp(MlpQ),
    Trees(ExtraTrees),
    Lookup(LookupTable),
}

/// One regression problem: rows of features, the taken action and its target.
#[derive(Debug, Clone, Copy)]
pub struct QData<'a> {
    pub inputs: &'a [f64],
    pub width: usize,
    pub actions: &'a [u8],
    pub targets: &'a [f64],
}

impl QData<'_> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

fn with_action(row: &[f64], a: u8, out: &mut Vec<f64>) {
    out.extend_from_slice(row);
    out.push(f64::from(a));
}

impl QModel {
    pub fn q_values(&self, x: &[f64]) -> Result<[f64; 2]> {
        Ok(match self {
            QModel::Constant(c) => [*c, *c],
            QModel::Mlp(m) => {
                if x.len() != m.scaler.mean.len() {
                    return Err(Error::Shape {
                        expected: m.scaler.mean.len(),
                        got: x.len(),
                        context: "q-network input",
                    });
                }
                let mut z = Vec::with_capacity(x.len());
                m.scaler.transform_into(x, &mut z);
                let o = m.net.forward(&z)?;
                [
                    o[0] * m.target_scale + m.target_mean,
                    o[1] * m.target_scale + m.target_mean,
                ]
            }
            QModel::Trees(t) => {
                if x.len() + 1 != t.n_features {
                    return Err(Error::Shape {
                        expected: t.n_features - 1,
                        got: x.len(),
                        context: "tree input",
                    });
                }
                let mut r = Vec::with_capacity(x.len() + 1);
                with_action(x, 0, &mut r);
                let q0 = t.predict(&r);
                *r.last_mut().unwrap() = 1.0;
                [q0, t.predict(&r)]
            }
            QModel::Lookup(l) => [l.get(x, 0)?, l.get(x, 1)?],
        })
    }

    /// Q-values for many rows at once.
    pub fn q_values_batch(&self, rows: &[f64], width: usize) -> Result<Vec<[f64; 2]>> {
        match self {
            QModel::Mlp(m) if width == m.scaler.mean.len() => {
                let n = rows.len() / width.max(1);
                let z = m.scaler.transform(rows);
                let tape = m.net.forward_batch(&z, n);
                Ok(tape
                    .output()
                    .chunks(2)
                    .map(|o| {
                        [
                            o[0] * m.target_scale + m.target_mean,
                            o[1] * m.target_scale + m.target_mean,
                        ]
                    })
                    .collect())
            }
            _ => rows.chunks(width.max(1)).map(|r| self.q_values(r)).collect(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            QModel::Constant(_) => "constant",
            QModel::Mlp(_) => "mlp",
            QModel::Trees(_) => "trees",
            QModel::Lookup(_) => "lookup",
        }
    }

    pub(crate) fn write_text(&self, out: &mut String) {
        match self {
            QModel::Constant(c) => writeln!(out, "qmodel constant {c}").unwrap(),
            QModel::Mlp(m) => {
                writeln!(out, "qmodel mlp").unwrap();
                writeln!(out, "sizes {}", join(m.net.sizes())).unwrap();
                writeln!(out, "scaler_mean {}", join(&m.scaler.mean)).unwrap();
                writeln!(out, "scaler_std {}", join(&m.scaler.std)).unwrap();
                writeln!(out, "target {} {}", m.target_mean, m.target_scale).unwrap();
                writeln!(out, "params {}", join(&m.net.params)).unwrap();
            }
            QModel::Trees(t) => {
                writeln!(out, "qmodel trees {} {}", t.n_features, t.trees.len()).unwrap();
                for tree in &t.trees {
                    write!(out, "tree {}", tree.nodes.len()).unwrap();
                    for n in &tree.nodes {
                        if n.feature == u32::MAX {
                            write!(out, " L {}", n.value).unwrap();
                        } else {
                            write!(out, " {} {} {}", n.feature, n.value, n.right).unwrap();
                        }
                    }
                    out.push('\n');
                }
            }
            QModel::Lookup(l) => {
                writeln!(out, "qmodel lookup {} {}", l.width, l.entries.len()).unwrap();
                for ((key, a), v) in &l.entries {
                    writeln!(out, "{a} {v} {}", join(key)).unwrap();
                }
            }
        }
    }

    pub(crate) fn read_text(r: &mut LineReader) -> Result<QModel> {
        let head = r.expect("qmodel")?;
        match head.first().copied() {
            Some("constant") if head.len() == 2 => Ok(QModel::Constant(r.parse(head[1])?)),
            Some("mlp") => {
                let sizes: Vec<usize> = { let f = r.expect("sizes")?; r.parse_all(&f)? };
                let mean = { let f = r.expect("scaler_mean")?; r.parse_all(&f)? };
                let std = { let f = r.expect("scaler_std")?; r.parse_all(&f)? };
                let t: Vec<f64> = { let f = r.expect("target")?; r.parse_all(&f)? };
                if t.len() != 2 {
                    return Err(r.err("target line needs mean and scale"));
                }
                let params = { let f = r.expect("params")?; r.parse_all(&f)? };
                let net = Mlp::from_params(&sizes, params)?;
                Ok(QModel::Mlp(MlpQ {
                    scaler: Scaler { mean, std },
                    target_mean: t[0],
                    target_scale: t[1],
                    net,
                }))
            }
            Some("trees") if head.len() == 3 => {
                let n_features: usize = r.parse(head[1])?;
                let n_trees: usize = r.parse(head[2])?;
                let mut trees = Vec::with_capacity(n_trees);
                for _ in 0..n_trees {
                    let f = r.expect("tree")?;
                    let n_nodes: usize = r.parse(f.first().copied().unwrap_or(""))?;
                    let mut nodes = Vec::with_capacity(n_nodes);
                    let mut i = 1;
                    while i < f.len() {
                        if f[i] == "L" && i + 1 < f.len() {
                            nodes.push(Node {
                                feature: u32::MAX,
                                value: r.parse(f[i + 1])?,
                                right: 0,
                            });
                            i += 2;
                        } else if i + 2 < f.len() {
                            nodes.push(Node {
                                feature: r.parse(f[i])?,
                                value: r.parse(f[i + 1])?,
                                right: r.parse(f[i + 2])?,
                            });
                            i += 3;
                        } else {
                            return Err(r.err("incomplete tree node"));
                        }
                    }
                    if nodes.len() != n_nodes {
                        return Err(r.err("tree node count mismatch"));
                    }
                    trees.push(Tree { nodes });
                }
                Ok(QModel::Trees(ExtraTrees { n_features, trees }))
            }
            Some("lookup") if head.len() == 3 => {
                let width: usize = r.parse(head[1])?;
                let n: usize = r.parse(head[2])?;
                let mut entries = std::collections::BTreeMap::new();
                for _ in 0..n {
                    let f = r.next_fields()?;
                    if f.len() != width + 2 {
                        return Err(r.err("lookup entry width mismatch"));
                    }
                    let a: u8 = r.parse(f[0])?;
                    let v: f64 = r.parse(f[1])?;
                    entries.insert((r.parse_all(&f[2..])?, a), v);
                }
                Ok(QModel::Lookup(LookupTable { width, entries }))
            }
            _ => Err(r.err(format!("unknown model header `{}`", head.join(" ")))),
        }
    }
}

/// Fits a Q approximator. For networks, `warm` (a network of the same shape)
/// seeds the parameters after being re-expressed for the new scalers, so the
/// starting point computes exactly the warm model's function.
pub fn fit_q(
    spec: &RegressorSpec,
    data: QData,
    seed: u64,
    warm: Option<&QModel>,
) -> Result<(QModel, Vec<f64>)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::invalid("cannot fit a Q model on an empty dataset"));
    }
    if data.inputs.len() != n * data.width || data.targets.len() != n {
        return Err(Error::Shape {
            expected: n * data.width,
            got: data.inputs.len(),
            context: "fit_q inputs",
        });
    }
    if data.actions.iter().any(|&a| a > 1) {
        return Err(Error::invalid("actions must be binary"));
    }
    match spec {
        RegressorSpec::Lookup => Ok((
            QModel::Lookup(LookupTable::fit(
                data.inputs,
                data.width,
                data.actions,
                data.targets,
            )?),
            Vec::new(),
        )),
        RegressorSpec::ExtraTrees(p) => {
            let mut rows = Vec::with_capacity(n * (data.width + 1));
            for (row, &a) in data.inputs.chunks(data.width).zip(data.actions) {
                with_action(row, a, &mut rows);
            }
            let t = trees_fit(&rows, data.width + 1, data.targets, p, seed)?;
            Ok((QModel::Trees(t), Vec::new()))
        }
        RegressorSpec::Mlp { hidden, train } => fit_mlp_q(hidden, train, data, seed, warm),
    }
}

fn fit_mlp_q(
    hidden: &[usize],
    train: &TrainConfig,
    data: QData,
    seed: u64,
    warm: Option<&QModel>,
) -> Result<(QModel, Vec<f64>)> {
    let n = data.len();
    let mean = data.targets.iter().sum::<f64>() / n as f64;
    let var = data.targets.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
    if let Some(bad) = data.targets.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "q target",
            value: *bad,
        });
    }
    if var == 0.0 {
        return Ok((QModel::Constant(mean), Vec::new()));
    }
    let scale = var.sqrt();
    let scaler = Scaler::fit(data.inputs, data.width);
    let mut sizes = vec![data.width];
    sizes.extend_from_slice(hidden);
    sizes.push(2);
    let mut net = match warm {
        Some(QModel::Mlp(w)) if w.net.sizes() == sizes.as_slice() => {
            rebase(w, &scaler, mean, scale)
        }
        _ => Mlp::new(&sizes, &mut ChaCha8Rng::seed_from_u64(seed))?,
    };
    let x = scaler.transform(data.inputs);
    let mut y = vec![0.0; 2 * n];
    let mut mask = vec![0.0; 2 * n];
    for (i, (&a, &t)) in data.actions.iter().zip(data.targets).enumerate() {
        y[2 * i + a as usize] = (t - mean) / scale;
        mask[2 * i + a as usize] = 1.0;
    }
    let cfg = TrainConfig {
        seed,
        ..train.clone()
    };
    let history = mlp_fit(&mut net, &x, &y, Some(&mask), &cfg)?;
    Ok((
        QModel::Mlp(MlpQ {
            scaler,
            target_mean: mean,
            target_scale: scale,
            net,
        }),
        history,
    ))
}

/// Re-expresses `w` for a new input scaler and target normalisation without
/// changing the function it computes in raw units.
fn rebase(w: &MlpQ, scaler: &Scaler, mean: f64, scale: f64) -> Mlp {
    let mut net = w.net.clone();
    let sizes = net.sizes().to_vec();
    let (d, h) = (sizes[0], sizes[1]);
    // first layer: z_old = (z_new·s_new + m_new − m_old) / s_old
    for i in 0..d {
        let ratio = scaler.std[i] / w.scaler.std[i];
        let shift = (scaler.mean[i] - w.scaler.mean[i]) / w.scaler.std[i];
        for o in 0..h {
            let wv = net.params[i * h + o];
            net.params[d * h + o] += wv * shift;
            net.params[i * h + o] = wv * ratio;
        }
    }
    // output layer: y_new = (y_old·scale_old + mean_old − mean) / scale
    let (wo, bo) = net.output_layer();
    let ratio = w.target_scale / scale;
    for p in &mut net.params[wo..bo] {
        *p *= ratio;
    }
    for p in &mut net.params[bo..] {
        *p = (*p * w.target_scale + w.target_mean - mean) / scale;
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::LineReader;
    use std::path::Path;

    fn toy(n: usize) -> (Vec<f64>, Vec<u8>, Vec<f64>) {
        let mut x = Vec::new();
        let mut a = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let v = i as f64 / n as f64;
            x.extend_from_slice(&[v, 1.0 - v, 3.0]);
            a.push((i % 2) as u8);
            y.push(v * 2.0 + (i % 2) as f64);
        }
        (x, a, y)
    }

    fn roundtrip(m: &QModel) -> QModel {
        let mut s = String::new();
        m.write_text(&mut s);
        let mut r = LineReader::new(&s, Path::new("mem"));
        QModel::read_text(&mut r).unwrap()
    }

    #[test]
    fn all_kinds_fit_and_roundtrip() {
        let (x, a, y) = toy(60);
        let data = QData {
            inputs: &x,
            width: 3,
            actions: &a,
            targets: &y,
        };
        for spec in [
            RegressorSpec::fqi_nn(),
            RegressorSpec::ExtraTrees(TreeParams {
                n_estimators: 5,
                ..TreeParams::default()
            }),
            RegressorSpec::Lookup,
        ] {
            let (m, _) = fit_q(&spec, data, 3, None).unwrap();
            assert_eq!(roundtrip(&m), m);
            if let QModel::Lookup(t) = &m {
                assert_eq!(t.get(&x[3..6], 1).unwrap(), y[1]);
                continue;
            }
            let q = m.q_values(&x[3..6]).unwrap();
            assert!((q[1] - y[1]).abs() < 0.2, "{spec:?} {q:?}");
            let batch = m.q_values_batch(&x, 3).unwrap();
            assert_eq!(batch[1], q);
        }
    }

    #[test]
    fn constant_targets_give_constant_model() {
        let (x, a, _) = toy(10);
        let y = vec![0.0; 10];
        let data = QData {
            inputs: &x,
            width: 3,
            actions: &a,
            targets: &y,
        };
        let (m, _) = fit_q(&RegressorSpec::fqi_nn(), data, 0, None).unwrap();
        assert_eq!(m.q_values(&[5.0, 5.0, 5.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn rebase_preserves_function() {
        let (x, a, y) = toy(40);
        let data = QData {
            inputs: &x,
            width: 3,
            actions: &a,
            targets: &y,
        };
        let (m, _) = fit_q(&RegressorSpec::physq_q(), data, 1, None).unwrap();
        let QModel::Mlp(w) = &m else { panic!() };
        let shifted: Vec<f64> = x.iter().enumerate().map(|(i, v)| if i % 3 == 2 { 7.0 } else { v * 1.5 }).collect();
        let scaler = Scaler::fit(&shifted, 3);
        let net = rebase(w, &scaler, 4.0, 0.3);
        let moved = QModel::Mlp(MlpQ {
            scaler,
            target_mean: 4.0,
            target_scale: 0.3,
            net,
        });
        for r in x.chunks(3).take(5) {
            let p = m.q_values(r).unwrap();
            let q = moved.q_values(r).unwrap();
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }
}
