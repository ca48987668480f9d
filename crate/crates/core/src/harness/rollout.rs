//! Controllers and closed-loop simulation of whole days.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{train_encoder, EncoderBundle, PhysicsPrior};
use crate::error::{Error, Result};
use crate::fqi::{
    epsilon_greedy_action, fqi_fit, physq_fit_oracle, physq_fit_with_encoder, AgentKind,
    FitOptions, QEnsemble,
};
use crate::mdp::{step_cost, AgentObservation, ExperienceBatch, ForecastBundle, HistoryBuffer, Transition};
use crate::mpc::{mpc_solve_dp, BauController, MpcFrequency, MpcProblem};
use crate::regress::RegressorSpec;
use crate::thermal::{step_hour_with, RcParams, SimState, HOURS_PER_DAY};

use super::config::ExperimentConfig;
use super::scenario::Scenario;

/// Something that decides heater requests.
pub trait Controller {
    fn name(&self) -> String;

    /// Called at midnight with the true state, before the first hour of `day`.
    fn plan_day(&mut self, _scenario: &Scenario, _day: usize, _state: &SimState) -> Result<()> {
        Ok(())
    }

    /// Requested action for the hour starting now.
    fn start_hour(&mut self, hour: usize, obs: &AgentObservation, state: &SimState) -> Result<u8>;

    /// Request at each minute of the hour; hourly controllers repeat their decision.
    fn minute_request(&mut self, _hour: usize, _minute: usize, _t_room: f64, hour_action: u8) -> u8 {
        hour_action
    }
}

/// Price-blind thermostat acting every minute.
#[derive(Debug, Default, Clone)]
pub struct BauAgent {
    bau: BauController,
}

impl Controller for BauAgent {
    fn name(&self) -> String {
        "bau".into()
    }

    fn start_hour(&mut self, _hour: usize, obs: &AgentObservation, _state: &SimState) -> Result<u8> {
        Ok(crate::mpc::bau_action(obs.t_room(), self.bau.heating))
    }

    fn minute_request(&mut self, _hour: usize, _minute: usize, t_room: f64, _hour_action: u8) -> u8 {
        self.bau.action(t_room)
    }
}

/// Binary MPC re-planned every midnight from the true state.
#[derive(Debug, Clone)]
pub struct MpcAgent {
    pub params: RcParams,
    pub freq: MpcFrequency,
    pub grid: f64,
    pub plan: Vec<u8>,
    pub planned_costs: Vec<f64>,
}

impl MpcAgent {
    pub fn new(params: RcParams, freq: MpcFrequency, grid: f64) -> Self {
        MpcAgent {
            params,
            freq,
            grid,
            plan: Vec::new(),
            planned_costs: Vec::new(),
        }
    }
}

impl Controller for MpcAgent {
    fn name(&self) -> String {
        format!("mpc-{}", self.freq.name())
    }

    fn plan_day(&mut self, scenario: &Scenario, day: usize, state: &SimState) -> Result<()> {
        let a = day * HOURS_PER_DAY;
        let problem = MpcProblem::for_day(
            &self.params,
            self.freq,
            &scenario.prices.values[a..a + HOURS_PER_DAY],
            &scenario.weather.values[a..a + HOURS_PER_DAY],
            [state.t_room, state.t_mass],
        )?;
        let sol = mpc_solve_dp(&problem, self.grid)?;
        self.plan = sol.actions;
        self.planned_costs.push(sol.cost);
        Ok(())
    }

    fn start_hour(&mut self, hour: usize, _obs: &AgentObservation, _state: &SimState) -> Result<u8> {
        Ok(self.plan[hour * self.freq.steps_per_hour()])
    }

    fn minute_request(&mut self, hour: usize, minute: usize, _t_room: f64, _hour_action: u8) -> u8 {
        let k = self.freq.steps_per_hour();
        self.plan[hour * k + minute / (60 / k)]
    }
}

/// Trains time-indexed ensembles for a given batch; for latent agents the
/// encoder is trained once here and then kept fixed.
#[derive(Debug, Clone)]
pub struct Planner {
    pub kind: AgentKind,
    pub batch: ExperienceBatch,
    pub encoder: Option<EncoderBundle>,
    pub opts: FitOptions,
}

/// Fit options for `kind` taken from the experiment configuration.
pub fn fit_options(cfg: &ExperimentConfig, kind: AgentKind, seed: u64) -> FitOptions {
    let t = &cfg.training;
    let regressor = match kind {
        AgentKind::FqiNn => RegressorSpec::Mlp {
            hidden: t.fqi_nn.hidden.clone(),
            train: t.fqi_nn.train.clone(),
        },
        AgentKind::FqiEt => RegressorSpec::ExtraTrees(t.trees),
        _ => RegressorSpec::Mlp {
            hidden: t.physq_q.hidden.clone(),
            train: t.physq_q.train.clone(),
        },
    };
    FitOptions {
        horizon: t.horizon,
        regressor,
        seed,
        warm_start: t.warm_start,
    }
}

impl Planner {
    pub fn train(cfg: &ExperimentConfig, kind: AgentKind, batch: &ExperienceBatch, seed: u64) -> Result<Self> {
        let prior = match kind {
            AgentKind::PhysQ => Some(PhysicsPrior::Correct),
            AgentKind::PhysQWrong => Some(PhysicsPrior::Wrong),
            _ => None,
        };
        let encoder = match prior {
            Some(p) => {
                let mut enc_cfg = cfg.training.encoder.clone();
                enc_cfg.train.seed = seed;
                Some(train_encoder(batch, &enc_cfg, p)?.bundle)
            }
            None => None,
        };
        Ok(Planner {
            kind,
            batch: batch.clone(),
            encoder,
            opts: fit_options(cfg, kind, seed),
        })
    }

    pub fn fit(&self, forecasts: &ForecastBundle, seed: u64) -> Result<QEnsemble> {
        let opts = FitOptions {
            seed,
            ..self.opts.clone()
        };
        let rep = match self.kind {
            AgentKind::FqiNn | AgentKind::FqiEt => fqi_fit(&self.batch, forecasts, self.kind, &opts)?,
            AgentKind::PhysQ | AgentKind::PhysQWrong => {
                let enc = self.encoder.as_ref().expect("latent agents carry an encoder");
                physq_fit_with_encoder(&self.batch, forecasts, enc, &opts)?
            }
            AgentKind::PhysQOracle => physq_fit_oracle(&self.batch, forecasts, &opts)?,
        };
        Ok(rep.ensemble)
    }
}

/// Learning agent: random until it has an ensemble, then ε-greedy on it.
pub struct QAgent {
    pub kind: AgentKind,
    pub planner: Option<Planner>,
    pub ensemble: Option<QEnsemble>,
    /// Refit the Q-functions each midnight with that night's forecast.
    pub replan_daily: bool,
    pub epsilon: f64,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl QAgent {
    pub fn new(kind: AgentKind, seed: u64) -> Self {
        QAgent {
            kind,
            planner: None,
            ensemble: None,
            replan_daily: false,
            epsilon: 1.0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Greedy evaluation agent that re-plans every night from `planner`.
    pub fn evaluator(planner: Planner, seed: u64) -> Self {
        let mut a = QAgent::new(planner.kind, seed);
        a.planner = Some(planner);
        a.replan_daily = true;
        a.epsilon = 0.0;
        a
    }
}

impl Controller for QAgent {
    fn name(&self) -> String {
        self.kind.name().into()
    }

    fn plan_day(&mut self, scenario: &Scenario, day: usize, _state: &SimState) -> Result<()> {
        if self.replan_daily {
            if let Some(p) = &self.planner {
                let fc = scenario.forecast(day)?;
                self.ensemble = Some(p.fit(&fc, self.seed.wrapping_add(day as u64))?);
            }
        }
        Ok(())
    }

    fn start_hour(&mut self, hour: usize, obs: &AgentObservation, state: &SimState) -> Result<u8> {
        match &self.ensemble {
            Some(e) => epsilon_greedy_action(e, obs, hour, self.epsilon, &mut self.rng, Some(state.t_mass)),
            None => Ok(self.rng.gen_range(0..2)),
        }
    }
}

/// Closed-loop state carried from one day to the next.
#[derive(Debug, Clone)]
pub struct Episode {
    pub state: SimState,
    pub history: HistoryBuffer,
}

impl Episode {
    pub fn new(initial: [f64; 2], depth: usize) -> Self {
        let mut history = HistoryBuffer::new(depth);
        history.push_room(initial[0]);
        Episode {
            state: SimState::new(initial[0], initial[1]),
            history,
        }
    }
}

/// Outcome of one simulated day.
#[derive(Debug, Clone, Default)]
pub struct DayLog {
    pub cost: f64,
    pub violation_minutes: u32,
    pub heater_on_above_band: u32,
    pub overridden_minutes: u32,
    pub min_t_room: f64,
    pub max_t_room: f64,
    pub transitions: Vec<Transition>,
    /// True mass temperature at the start of each hour, for audits.
    pub t_mass: Vec<f64>,
}

/// Simulates absolute day `day` of `scenario` under `ctrl`.
pub fn run_day(
    ctrl: &mut dyn Controller,
    scenario: &Scenario,
    params: &RcParams,
    day: usize,
    ep: &mut Episode,
) -> Result<DayLog> {
    ctrl.plan_day(scenario, day, &ep.state)?;
    let mut log = DayLog {
        min_t_room: f64::INFINITY,
        max_t_room: f64::NEG_INFINITY,
        ..DayLog::default()
    };
    for hour in 0..HOURS_PER_DAY {
        let t_a = scenario.ambient(day, hour);
        let obs = ep.history.observe(t_a, hour)?;
        let action = ctrl.start_hour(hour, &obs, &ep.state)?;
        if action > 1 {
            return Err(Error::invalid(format!("controller returned action {action}")));
        }
        let out = step_hour_with(ep.state, params, t_a, |m, tr| ctrl.minute_request(hour, m, tr, action))?;
        log.cost += step_cost(scenario.price(day, hour), out.u_phys_avg, 1.0)?;
        log.violation_minutes += out.minutes_outside_band;
        log.heater_on_above_band += out.heater_on_above_band;
        log.overridden_minutes += out.minutes_overridden;
        log.min_t_room = log.min_t_room.min(out.min_t_room);
        log.max_t_room = log.max_t_room.max(out.max_t_room);
        log.t_mass.push(ep.state.t_mass);
        ep.history.push_room(out.state.t_room);
        ep.history.push_power(out.u_phys_avg);
        let (nd, nh) = if hour + 1 == HOURS_PER_DAY { (day + 1, 0) } else { (day, hour + 1) };
        let next_obs = ep.history.observe(scenario.ambient(nd, nh), nh)?;
        log.transitions.push(Transition {
            obs,
            action,
            next_obs,
            u_phys: out.u_phys_avg,
            hidden: Some([ep.state.t_mass, out.state.t_mass]),
        });
        ep.state = out.state;
    }
    Ok(log)
}

/// Evaluation of one controller over the held-out days.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub scenario: String,
    pub agent: String,
    pub batch_days: usize,
    pub replicate: usize,
    pub cost_eur: f64,
    pub daily_costs: Vec<f64>,
    /// Minutes that started outside the comfort band.
    pub violation_minutes: u32,
    pub heater_on_above_band: u32,
    pub min_t_room: f64,
    pub max_t_room: f64,
}

/// Greedy closed-loop run over all test days from the configured initial state.
pub fn evaluate_agent(
    ctrl: &mut dyn Controller,
    scenario: &Scenario,
    cfg: &ExperimentConfig,
) -> Result<RunResult> {
    Ok(evaluate_agent_traced(ctrl, scenario, cfg)?.0)
}

/// Like [`evaluate_agent`], also returning every hourly transition of the
/// test days (with the true mass temperature in `hidden`).
pub fn evaluate_agent_traced(
    ctrl: &mut dyn Controller,
    scenario: &Scenario,
    cfg: &ExperimentConfig,
) -> Result<(RunResult, Vec<Transition>)> {
    let mut ep = Episode::new(cfg.training.initial_state, cfg.training.history_depth);
    let mut r = RunResult {
        scenario: scenario.kind.name().into(),
        agent: ctrl.name(),
        batch_days: 0,
        replicate: 0,
        cost_eur: 0.0,
        daily_costs: Vec::with_capacity(scenario.test_days),
        violation_minutes: 0,
        heater_on_above_band: 0,
        min_t_room: f64::INFINITY,
        max_t_room: f64::NEG_INFINITY,
    };
    let mut trace = Vec::with_capacity(scenario.test_days * HOURS_PER_DAY);
    for j in 0..scenario.test_days {
        let log = run_day(ctrl, scenario, &cfg.building, scenario.test_day(j), &mut ep)?;
        r.cost_eur += log.cost;
        r.daily_costs.push(log.cost);
        r.violation_minutes += log.violation_minutes;
        r.heater_on_above_band += log.heater_on_above_band;
        r.min_t_room = r.min_t_room.min(log.min_t_room);
        r.max_t_room = r.max_t_room.max(log.max_t_room);
        trace.extend(log.transitions);
    }
    Ok((r, trace))
}

/// One row of the growing-batch training log.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRow {
    pub day: usize,
    pub agent: String,
    pub cost_eur: f64,
    pub epsilon: f64,
}

/// Result of interleaved exploration and periodic retraining.
#[derive(Debug, Clone)]
pub struct GrowingRun {
    pub batch: ExperienceBatch,
    pub daily: Vec<DailyRow>,
    /// Planner trained on the full batch at the end of training.
    pub planner: Planner,
    /// Batch snapshots at the requested day counts, in request order.
    pub snapshots: Vec<ExperienceBatch>,
}

/// Starts from an empty batch, acts ε-greedily (randomly before the first
/// training), appends every hour, decays ε nightly and retrains every
/// `retrain_every` days on the whole batch.
pub fn run_growing_batch(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    kind: AgentKind,
    seed: u64,
    snapshot_days: &[usize],
) -> Result<GrowingRun> {
    let t = &cfg.training;
    let mut agent = QAgent::new(kind, seed);
    let mut ep = Episode::new(t.initial_state, t.history_depth);
    let mut batch = ExperienceBatch::new(seed);
    let mut daily = Vec::with_capacity(t.train_days);
    let mut snapshots = Vec::new();
    let mut planner = None;
    for d in 0..t.train_days {
        agent.epsilon = if agent.ensemble.is_some() { cfg.epsilon(d) } else { 1.0 };
        let log = run_day(&mut agent, scenario, &cfg.building, scenario.train_day(d), &mut ep)?;
        for tr in log.transitions {
            batch.push(tr)?;
        }
        batch.days = d + 1;
        daily.push(DailyRow {
            day: d,
            agent: kind.name().into(),
            cost_eur: log.cost,
            epsilon: cfg.epsilon(d),
        });
        if snapshot_days.contains(&(d + 1)) {
            snapshots.push(batch.snapshot(batch.len(), d + 1));
        }
        let last = d + 1 == t.train_days;
        if (d + 1) % t.retrain_every == 0 || last {
            let round_seed = seed.wrapping_mul(31).wrapping_add(d as u64);
            let p = Planner::train(cfg, kind, &batch, round_seed)?;
            if !last {
                let fc = scenario.training_forecast(scenario.train_day(d + 1))?;
                agent.ensemble = Some(p.fit(&fc, round_seed)?);
            }
            planner = Some(p);
        }
    }
    let order: Vec<ExperienceBatch> = snapshot_days
        .iter()
        .filter_map(|&sd| snapshots.iter().find(|s| s.days == sd).cloned())
        .collect();
    Ok(GrowingRun {
        batch,
        daily,
        planner: planner.expect("at least one training round"),
        snapshots: order,
    })
}
