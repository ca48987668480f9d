//! Extended fitted Q-iteration with one approximator per hour of a two-day
//! window, and its physics-informed variant.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::encoder::{freeze_and_annotate, train_encoder, EncoderBundle, EncoderConfig, PhysicsPrior};
use crate::error::{Error, Result};
use crate::mdp::{AgentObservation, ExperienceBatch, ForecastBundle};
use crate::regress::{fit_q, QData, QModel, RegressorSpec};
use crate::textio::LineReader;

/// Hours per decision slot.
pub const SLOT_HOURS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum AgentKind {
    #[serde(rename = "fqi-nn")]
    FqiNn,
    #[serde(rename = "fqi-et")]
    FqiEt,
    #[serde(rename = "physq")]
    PhysQ,
    #[serde(rename = "physq-wrong")]
    PhysQWrong,
    /// PhysQ fed the simulator's true mass temperature instead of an encoder.
    #[serde(rename = "physq-oracle")]
    PhysQOracle,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::FqiNn => "fqi-nn",
            AgentKind::FqiEt => "fqi-et",
            AgentKind::PhysQ => "physq",
            AgentKind::PhysQWrong => "physq-wrong",
            AgentKind::PhysQOracle => "physq-oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "fqi-nn" => AgentKind::FqiNn,
            "fqi-et" => AgentKind::FqiEt,
            "physq" => AgentKind::PhysQ,
            "physq-wrong" => AgentKind::PhysQWrong,
            "physq-oracle" => AgentKind::PhysQOracle,
            other => return Err(Error::invalid(format!("unknown agent kind `{other}`"))),
        })
    }

    pub fn uses_latent(self) -> bool {
        matches!(self, AgentKind::PhysQ | AgentKind::PhysQWrong | AgentKind::PhysQOracle)
    }

    /// Default approximator for this agent kind.
    pub fn default_regressor(self) -> RegressorSpec {
        match self {
            AgentKind::FqiNn => RegressorSpec::fqi_nn(),
            AgentKind::FqiEt => RegressorSpec::fqi_et(),
            _ => RegressorSpec::physq_q(),
        }
    }
}

/// Where a latent-state agent gets `ẑ` from.
#[derive(Debug, Clone, PartialEq)]
pub enum Latent {
    None,
    Encoder(Box<EncoderBundle>),
    /// The true mass temperature supplied by the caller.
    TrueMass,
}

/// Q-function features for history-based agents: the room history and ambient.
pub fn history_features(obs: &AgentObservation) -> Vec<f64> {
    let mut f = obs.t_room_history.clone();
    f.push(obs.t_ambient);
    f
}

/// Q-function features for latent-state agents: current room temperature, `ẑ`, ambient.
pub fn latent_features(obs: &AgentObservation, z: f64) -> Vec<f64> {
    vec![obs.t_room(), z, obs.t_ambient]
}

/// The 2T time-indexed approximators of one trained agent.
#[derive(Debug, Clone, PartialEq)]
pub struct QEnsemble {
    pub kind: AgentKind,
    /// Control horizon T; the ensemble holds 2T models.
    pub horizon: usize,
    pub models: Vec<QModel>,
    pub latent: Latent,
}

/// Settings for one backward fitting pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub horizon: usize,
    pub regressor: RegressorSpec,
    pub seed: u64,
    /// Start each network from the already fitted network of the next slot.
    pub warm_start: bool,
}

impl FitOptions {
    pub fn new(kind: AgentKind, seed: u64) -> Self {
        FitOptions {
            horizon: 24,
            regressor: kind.default_regressor(),
            seed,
            warm_start: true,
        }
    }
}

/// Per-transition feature rows for both ends of every transition. The column
/// `ambient_col` of the next-state rows is overwritten with the forecast of
/// the slot that follows the one being fitted.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub width: usize,
    pub ambient_col: usize,
    pub current: Vec<f64>,
    pub next: Vec<f64>,
    pub actions: Vec<u8>,
    pub u_phys: Vec<f64>,
}

impl FeatureTable {
    pub fn history(batch: &ExperienceBatch) -> Result<Self> {
        let depth = batch
            .depth()
            .ok_or_else(|| Error::invalid("cannot fit on an empty batch"))?;
        let width = depth + 2;
        let mut t = FeatureTable::empty(width, width - 1, batch.len());
        for tr in &batch.transitions {
            t.current.extend(history_features(&tr.obs));
            t.next.extend(history_features(&tr.next_obs));
            t.actions.push(tr.action);
            t.u_phys.push(tr.u_phys);
        }
        Ok(t)
    }

    /// Latent features given `(ẑ_i, ẑ_{i+1})` per transition.
    pub fn latent(batch: &ExperienceBatch, z: &[[f64; 2]]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::invalid("cannot fit on an empty batch"));
        }
        if z.len() != batch.len() {
            return Err(Error::Shape {
                expected: batch.len(),
                got: z.len(),
                context: "latent annotations",
            });
        }
        let mut t = FeatureTable::empty(3, 2, batch.len());
        for (tr, zz) in batch.transitions.iter().zip(z) {
            t.current.extend(latent_features(&tr.obs, zz[0]));
            t.next.extend(latent_features(&tr.next_obs, zz[1]));
            t.actions.push(tr.action);
            t.u_phys.push(tr.u_phys);
        }
        Ok(t)
    }

    fn empty(width: usize, ambient_col: usize, n: usize) -> Self {
        FeatureTable {
            width,
            ambient_col,
            current: Vec::with_capacity(n * width),
            next: Vec::with_capacity(n * width),
            actions: Vec::with_capacity(n),
            u_phys: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn injected(&self, rows: &[f64], t_ambient: f64) -> Vec<f64> {
        let mut out = rows.to_vec();
        for r in out.chunks_mut(self.width) {
            r[self.ambient_col] = t_ambient;
        }
        out
    }
}

/// Training pairs for one slot: measured current features, the taken actions,
/// and targets `λ̂_k u^phys Δt / 1000 + min_u Q̂_{k+1}(x̂_{i+1}, u)`; only the
/// next state carries forecast exogenous values.
///
/// `slot` is 0-based in `[0, 2T)`; `next` is the approximator of `slot + 1`,
/// or `None` for the last slot.
pub fn build_targets(
    table: &FeatureTable,
    forecasts: &ForecastBundle,
    slot: usize,
    next: Option<&QModel>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let horizon2 = forecasts.horizon();
    if slot >= horizon2 {
        return Err(Error::invalid(format!("slot {slot} outside [0, {horizon2})")));
    }
    let inputs = table.current.clone();
    let price = forecasts.prices[slot];
    let mut targets: Vec<f64> = table
        .u_phys
        .iter()
        .map(|u| price * u * SLOT_HOURS / 1000.0)
        .collect();
    if let Some(q) = next {
        if slot + 1 >= horizon2 {
            return Err(Error::invalid("the last slot has no successor"));
        }
        let next_rows = table.injected(&table.next, forecasts.t_ambient[slot + 1]);
        let qn = q.q_values_batch(&next_rows, table.width)?;
        for (t, v) in targets.iter_mut().zip(qn) {
            *t += v[0].min(v[1]);
        }
    }
    Ok((inputs, targets))
}

/// Fitted ensemble plus the training-loss history of each slot.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub ensemble: QEnsemble,
    pub slot_losses: Vec<Vec<f64>>,
}

/// Backward loop over slots `2T−1 … 0`, each slot bootstrapping from the next.
pub fn fit_backward(
    table: &FeatureTable,
    forecasts: &ForecastBundle,
    opts: &FitOptions,
) -> Result<(Vec<QModel>, Vec<Vec<f64>>)> {
    if table.is_empty() {
        return Err(Error::invalid("cannot fit on an empty batch"));
    }
    let h2 = 2 * opts.horizon;
    if opts.horizon == 0 || forecasts.horizon() != h2 {
        return Err(Error::Shape {
            expected: h2,
            got: forecasts.horizon(),
            context: "forecast horizon (2T)",
        });
    }
    let mut models: Vec<Option<QModel>> = vec![None; h2];
    let mut losses = vec![Vec::new(); h2];
    for k in (0..h2).rev() {
        let next = models.get(k + 1).and_then(|m| m.as_ref());
        let (inputs, targets) = build_targets(table, forecasts, k, next)?;
        let data = QData {
            inputs: &inputs,
            width: table.width,
            actions: &table.actions,
            targets: &targets,
        };
        let seed = opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64);
        let warm = if opts.warm_start { next } else { None };
        let (model, hist) = fit_q(&opts.regressor, data, seed, warm).map_err(|e| Error::SlotFit {
            slot: k,
            source: Box::new(e),
        })?;
        models[k] = Some(model);
        losses[k] = hist;
    }
    Ok((models.into_iter().map(|m| m.expect("every slot fitted")).collect(), losses))
}

/// Plain extended FQI on the observation history.
pub fn fqi_fit(
    batch: &ExperienceBatch,
    forecasts: &ForecastBundle,
    kind: AgentKind,
    opts: &FitOptions,
) -> Result<FitReport> {
    if kind.uses_latent() {
        return Err(Error::invalid(format!("{} needs a latent state", kind.name())));
    }
    let table = FeatureTable::history(batch)?;
    let (models, slot_losses) = fit_backward(&table, forecasts, opts)?;
    Ok(FitReport {
        ensemble: QEnsemble {
            kind,
            horizon: opts.horizon,
            models,
            latent: Latent::None,
        },
        slot_losses,
    })
}

/// Second PhysQ step with a frozen encoder: annotate the batch, then fit the
/// low-dimensional Q-functions. The encoder is not modified.
pub fn physq_fit_with_encoder(
    batch: &ExperienceBatch,
    forecasts: &ForecastBundle,
    encoder: &EncoderBundle,
    opts: &FitOptions,
) -> Result<FitReport> {
    let annotated = freeze_and_annotate(encoder, batch)?;
    let table = FeatureTable::latent(batch, &annotated.latent)?;
    let (models, slot_losses) = fit_backward(&table, forecasts, opts)?;
    let kind = match encoder.prior {
        PhysicsPrior::Correct => AgentKind::PhysQ,
        PhysicsPrior::Wrong => AgentKind::PhysQWrong,
    };
    Ok(FitReport {
        ensemble: QEnsemble {
            kind,
            horizon: opts.horizon,
            models,
            latent: Latent::Encoder(Box::new(encoder.clone())),
        },
        slot_losses,
    })
}

/// Both PhysQ steps: train the encoder on the batch, freeze it, fit the Q-functions.
pub fn physq_fit(
    batch: &ExperienceBatch,
    forecasts: &ForecastBundle,
    prior: PhysicsPrior,
    enc_cfg: &EncoderConfig,
    opts: &FitOptions,
) -> Result<FitReport> {
    let enc = train_encoder(batch, enc_cfg, prior)?;
    physq_fit_with_encoder(batch, forecasts, &enc.bundle, opts)
}

/// PhysQ with the recorded true mass temperatures in place of an encoder.
pub fn physq_fit_oracle(
    batch: &ExperienceBatch,
    forecasts: &ForecastBundle,
    opts: &FitOptions,
) -> Result<FitReport> {
    let z = batch
        .transitions
        .iter()
        .map(|t| {
            t.hidden
                .ok_or_else(|| Error::invalid("oracle fit needs recorded mass temperatures"))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = FeatureTable::latent(batch, &z)?;
    let (models, slot_losses) = fit_backward(&table, forecasts, opts)?;
    Ok(FitReport {
        ensemble: QEnsemble {
            kind: AgentKind::PhysQOracle,
            horizon: opts.horizon,
            models,
            latent: Latent::TrueMass,
        },
        slot_losses,
    })
}

impl QEnsemble {
    /// Q-function features at decision time. `true_mass` is only read by oracle agents.
    pub fn features(&self, obs: &AgentObservation, true_mass: Option<f64>) -> Result<Vec<f64>> {
        Ok(match &self.latent {
            Latent::None => history_features(obs),
            Latent::Encoder(b) => latent_features(obs, b.encode(obs)?),
            Latent::TrueMass => latent_features(
                obs,
                true_mass.ok_or_else(|| Error::invalid("oracle agent needs the true mass temperature"))?,
            ),
        })
    }

    /// Q-values of both actions at decision slot `slot ∈ [0, T)`.
    pub fn q_values(&self, obs: &AgentObservation, slot: usize, true_mass: Option<f64>) -> Result<[f64; 2]> {
        if slot >= self.horizon {
            return Err(Error::invalid(format!(
                "decision slot {slot} outside the policy horizon {}",
                self.horizon
            )));
        }
        self.models[slot].q_values(&self.features(obs, true_mass)?)
    }
}

/// Cost-minimising action at `slot`; ties go to action 0.
pub fn greedy_action(ens: &QEnsemble, obs: &AgentObservation, slot: usize, true_mass: Option<f64>) -> Result<u8> {
    let q = ens.q_values(obs, slot, true_mass)?;
    Ok(argmin(q))
}

pub fn argmin(q: [f64; 2]) -> u8 {
    if q[1] < q[0] {
        1
    } else {
        0
    }
}

/// Uniform random action with probability `eps`, otherwise greedy.
pub fn epsilon_greedy_action(
    ens: &QEnsemble,
    obs: &AgentObservation,
    slot: usize,
    eps: f64,
    rng: &mut impl Rng,
    true_mass: Option<f64>,
) -> Result<u8> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid(format!("epsilon {eps} outside [0, 1]")));
    }
    if rng.gen::<f64>() < eps {
        return Ok(rng.gen_range(0..2));
    }
    greedy_action(ens, obs, slot, true_mass)
}

const ENSEMBLE_VERSION: &str = "v1";

impl QEnsemble {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::new();
        let latent = match &self.latent {
            Latent::None => "none",
            Latent::Encoder(_) => "encoder",
            Latent::TrueMass => "true-mass",
        };
        writeln!(
            s,
            "physq-ensemble {ENSEMBLE_VERSION} {} {} {latent}",
            self.kind.name(),
            self.horizon
        )
        .unwrap();
        if let Latent::Encoder(b) = &self.latent {
            b.write_text(&mut s);
        }
        for m in &self.models {
            m.write_text(&mut s);
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut r = LineReader::new(&text, path);
        let head = r.expect("physq-ensemble")?;
        if head.first() != Some(&ENSEMBLE_VERSION) {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: head.first().unwrap_or(&"").to_string(),
                expected: ENSEMBLE_VERSION,
            });
        }
        if head.len() != 4 {
            return Err(r.err("ensemble header needs kind, horizon and latent source"));
        }
        let kind = AgentKind::parse(head[1])?;
        let horizon: usize = r.parse(head[2])?;
        let latent = match head[3] {
            "none" => Latent::None,
            "encoder" => Latent::Encoder(Box::new(EncoderBundle::read_text(&mut r)?)),
            "true-mass" => Latent::TrueMass,
            other => return Err(r.err(format!("unknown latent source `{other}`"))),
        };
        let models = (0..2 * horizon)
            .map(|_| QModel::read_text(&mut r))
            .collect::<Result<Vec<_>>>()?;
        Ok(QEnsemble {
            kind,
            horizon,
            models,
            latent,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_observation, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(t: f64, slot: usize) -> AgentObservation {
        make_observation(&[t; 5], &[0.0; 4], 5.0, slot, 4).unwrap()
    }

    fn three_transitions() -> ExperienceBatch {
        let mut b = ExperienceBatch::new(0);
        for (i, (t, a, u)) in [(19.0, 1, 10.0), (20.0, 0, 0.0), (21.0, 1, 10.0)].into_iter().enumerate() {
            b.push(Transition {
                obs: obs(t, i),
                action: a,
                next_obs: obs(t + 0.5, i + 1),
                u_phys: u,
                hidden: Some([t, t]),
            })
            .unwrap();
        }
        b
    }

    #[test]
    fn last_slot_targets_are_single_step_costs() {
        let b = three_transitions();
        let table = FeatureTable::history(&b).unwrap();
        let fc = ForecastBundle::new(vec![100.0, 50.0], vec![4.0, 6.0]).unwrap();
        let (x, y) = build_targets(&table, &fc, 1, None).unwrap();
        assert_eq!(y, vec![0.5, 0.0, 0.5]);
        // current rows keep the measured ambient temperature
        assert_eq!(x, table.current);
        assert!(build_targets(&table, &fc, 2, None).is_err());
    }

    #[test]
    fn smallest_horizon() {
        let b = three_transitions();
        let fc = ForecastBundle::new(vec![100.0, 50.0], vec![4.0, 6.0]).unwrap();
        let opts = FitOptions {
            horizon: 1,
            regressor: RegressorSpec::ExtraTrees(crate::regress::TreeParams {
                min_samples_split: 2,
                ..Default::default()
            }),
            seed: 0,
            warm_start: false,
        };
        let rep = fqi_fit(&b, &fc, AgentKind::FqiEt, &opts).unwrap();
        assert_eq!(rep.ensemble.models.len(), 2);
        // fully grown trees reproduce their distinct training targets
        for (t, cost) in b.transitions.iter().zip([0.5, 0.0, 0.5]) {
            let mut row = history_features(&t.obs);
            row[5] = 6.0;
            let q = rep.ensemble.models[1].q_values(&row).unwrap();
            assert_eq!(q[t.action as usize], cost);
        }
    }

    #[test]
    fn zero_prices_give_zero_q() {
        let b = three_transitions();
        let fc = ForecastBundle::new(vec![0.0; 4], vec![5.0; 4]).unwrap();
        for spec in [RegressorSpec::fqi_nn(), RegressorSpec::fqi_et()] {
            let opts = FitOptions {
                horizon: 2,
                regressor: spec,
                seed: 1,
                warm_start: true,
            };
            let rep = fqi_fit(&b, &fc, AgentKind::FqiNn, &opts).unwrap();
            for m in &rep.ensemble.models {
                for t in &b.transitions {
                    let q = m.q_values(&history_features(&t.obs)).unwrap();
                    assert_eq!(q, [0.0, 0.0]);
                }
            }
        }
    }

    fn ensemble_with(q: [f64; 2]) -> QEnsemble {
        QEnsemble {
            kind: AgentKind::FqiNn,
            horizon: 1,
            models: vec![QModel::Constant(0.0), QModel::Constant(0.0)],
            latent: Latent::None,
        }
        .with_first(q)
    }

    impl QEnsemble {
        fn with_first(mut self, q: [f64; 2]) -> Self {
            let mut table = crate::regress::LookupTable::default();
            table.width = 6;
            let key = crate::regress::LookupTable::fit(&history_features(&obs(20.0, 0)), 6, &[0], &[q[0]])
                .unwrap()
                .entries
                .into_keys()
                .next()
                .unwrap();
            table.entries.insert(key.clone(), q[0]);
            table.entries.insert((key.0, 1), q[1]);
            self.models[0] = QModel::Lookup(table);
            self
        }
    }

    #[test]
    fn greedy_is_argmin_with_tie_to_off() {
        assert_eq!(greedy_action(&ensemble_with([3.0, 5.0]), &obs(20.0, 0), 0, None).unwrap(), 0);
        assert_eq!(greedy_action(&ensemble_with([5.0, 3.0]), &obs(20.0, 0), 0, None).unwrap(), 1);
        assert_eq!(greedy_action(&ensemble_with([4.0, 4.0]), &obs(20.0, 0), 0, None).unwrap(), 0);
        assert!(greedy_action(&ensemble_with([4.0, 4.0]), &obs(20.0, 0), 1, None).is_err());
    }

    #[test]
    fn epsilon_greedy_behaviour() {
        let e = ensemble_with([5.0, 3.0]);
        let o = obs(20.0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy_action(&e, &o, 0, 0.0, &mut rng, None).unwrap(), 1);
        }
        let n = 10_000;
        let ones: usize = (0..n)
            .map(|_| epsilon_greedy_action(&e, &o, 0, 1.0, &mut rng, None).unwrap() as usize)
            .sum();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((ones as f64 - n as f64 / 2.0).abs() < 3.0 * sigma);
        let seq = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| epsilon_greedy_action(&e, &o, 0, 0.6, &mut r, None).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(9), seq(9));
        assert!(epsilon_greedy_action(&e, &o, 0, 1.5, &mut rng, None).is_err());
    }

    #[test]
    fn ensemble_roundtrip() {
        let b = three_transitions();
        let fc = ForecastBundle::new(vec![10.0; 4], vec![5.0; 4]).unwrap();
        let opts = FitOptions {
            horizon: 2,
            regressor: RegressorSpec::physq_q(),
            seed: 1,
            warm_start: true,
        };
        let rep = physq_fit_oracle(&b, &fc, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        rep.ensemble.save(&p).unwrap();
        assert_eq!(QEnsemble::load(&p).unwrap(), rep.ensemble);
    }
}
