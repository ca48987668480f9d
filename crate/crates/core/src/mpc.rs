//! Benchmark controllers: a price-blind thermostat and an exact binary-action MPC.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::thermal::{LinearThermalModel, RcParams, COMFORT_MAX, COMFORT_MIN, MINUTES_PER_HOUR};

/// Thermostat setpoint below which the price-blind controller starts heating.
pub const BAU_ON_BELOW: f64 = 20.0;
/// Temperature at which it stops.
pub const BAU_OFF_ABOVE: f64 = 22.0;

/// Business-as-usual thermostat: heat at or below 20 °C, stop at 22 °C.
pub fn bau_action(t_room: f64, heating: bool) -> u8 {
    if t_room >= BAU_OFF_ABOVE {
        0
    } else if t_room <= BAU_ON_BELOW || heating {
        1
    } else {
        0
    }
}

/// Stateful wrapper that remembers whether it is currently heating.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BauController {
    pub heating: bool,
}

impl BauController {
    pub fn action(&mut self, t_room: f64) -> u8 {
        let u = bau_action(t_room, self.heating);
        self.heating = u == 1;
        u
    }
}

/// Comfort bounds are tightened by this much so that floating-point
/// differences between the planning model and the simulator cannot trip the backup.
pub const BOUND_MARGIN: f64 = 1e-9;

/// Exact binary-action scheduling problem on the simulator-equivalent model.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    /// One-minute map; a decision step applies it `minutes_per_step` times.
    pub minute_model: LinearThermalModel,
    pub minutes_per_step: usize,
    pub heater_power_max: f64,
    /// Price per decision step (€/MWh).
    pub prices: Vec<f64>,
    /// Ambient temperature per decision step (°C).
    pub t_ambient: Vec<f64>,
    /// Initial `(T_r, T_m)`.
    pub initial: [f64; 2],
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpcFrequency {
    Hourly,
    Quarterly,
}

impl MpcFrequency {
    pub fn steps_per_hour(self) -> usize {
        match self {
            MpcFrequency::Hourly => 1,
            MpcFrequency::Quarterly => 4,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hourly" => Ok(MpcFrequency::Hourly),
            "quarterly" => Ok(MpcFrequency::Quarterly),
            other => Err(Error::invalid(format!("unknown MPC frequency `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MpcFrequency::Hourly => "hourly",
            MpcFrequency::Quarterly => "quarterly",
        }
    }
}

/// Planned schedule: one binary action per step and its energy cost (€).
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub actions: Vec<u8>,
    pub cost: f64,
    /// Predicted `(T_r, T_m)` after every step.
    pub states: Vec<[f64; 2]>,
}

impl MpcProblem {
    /// A day-long problem over hourly prices and ambient at the given frequency.
    pub fn for_day(
        params: &RcParams,
        freq: MpcFrequency,
        hourly_prices: &[f64],
        hourly_ambient: &[f64],
        initial: [f64; 2],
    ) -> Result<Self> {
        params.validate()?;
        if hourly_prices.len() != hourly_ambient.len() || hourly_prices.is_empty() {
            return Err(Error::Shape {
                expected: hourly_prices.len(),
                got: hourly_ambient.len(),
                context: "MPC hourly inputs",
            });
        }
        let k = freq.steps_per_hour();
        let rep = |v: &[f64]| v.iter().flat_map(|x| std::iter::repeat(*x).take(k)).collect::<Vec<_>>();
        Ok(MpcProblem {
            minute_model: LinearThermalModel::one_minute(params),
            minutes_per_step: MINUTES_PER_HOUR / k,
            heater_power_max: params.heater_power_max,
            prices: rep(hourly_prices),
            t_ambient: rep(hourly_ambient),
            initial,
            t_min: COMFORT_MIN,
            t_max: COMFORT_MAX,
        })
    }

    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    pub fn step_hours(&self) -> f64 {
        self.minutes_per_step as f64 / 60.0
    }

    fn validate(&self) -> Result<()> {
        if self.prices.is_empty() || self.prices.len() != self.t_ambient.len() {
            return Err(Error::Shape {
                expected: self.prices.len(),
                got: self.t_ambient.len(),
                context: "MPC horizon",
            });
        }
        if self.minutes_per_step == 0 {
            return Err(Error::invalid("a step needs at least one minute"));
        }
        for v in self.prices.iter().chain(&self.t_ambient).chain(&self.initial) {
            crate::error::ensure_finite("MPC input", *v)?;
        }
        Ok(())
    }

    /// Cost of running the heater for step `t`.
    pub fn step_cost(&self, t: usize, action: u8) -> f64 {
        self.prices[t] * self.heater_power_max * f64::from(action) * self.step_hours() / 1000.0
    }

    /// Advances one step minute by minute; `None` if any minute leaves the tightened band.
    pub fn advance(&self, x: [f64; 2], t: usize, action: u8) -> Option<[f64; 2]> {
        let u = self.heater_power_max * f64::from(action);
        let lo = self.t_min + BOUND_MARGIN;
        let hi = self.t_max - BOUND_MARGIN;
        let mut s = x;
        for _ in 0..self.minutes_per_step {
            s = self.minute_model.step(s, u, self.t_ambient[t]);
            if s[0] < lo || s[0] > hi {
                return None;
            }
        }
        Some(s)
    }

    /// Simulates an action sequence; `None` if it violates comfort.
    pub fn rollout(&self, actions: &[u8]) -> Option<MpcSolution> {
        let mut x = self.initial;
        let mut cost = 0.0;
        let mut states = Vec::with_capacity(actions.len());
        for (t, &a) in actions.iter().enumerate() {
            x = self.advance(x, t, a)?;
            cost += self.step_cost(t, a);
            states.push(x);
        }
        Some(MpcSolution {
            actions: actions.to_vec(),
            cost,
            states,
        })
    }

    /// Upper bound on the cost lost by merging states within one grid cell:
    /// the stored-energy difference of two states in a cell, priced at the
    /// highest price.
    pub fn grid_tolerance(&self, params: &RcParams, resolution: f64) -> f64 {
        let max_price = self.prices.iter().cloned().fold(0.0, f64::max);
        resolution * (params.room_capacity + params.mass_capacity) * max_price / 1000.0
    }
}

/// Grid resolution used by default (°C).
pub const DEFAULT_GRID: f64 = 0.05;

#[derive(Debug, Clone, Copy)]
struct Label {
    x: [f64; 2],
    cost: f64,
    parent: usize,
    action: u8,
}

/// Forward dynamic program over a `(T_r, T_m)` grid with binary actions.
///
/// Each grid cell keeps one exactly propagated state: the cheapest one reaching
/// the cell, the warmer one on ties. The returned schedule is therefore an
/// exact trajectory of the model.
pub fn mpc_solve_dp(problem: &MpcProblem, resolution: f64) -> Result<MpcSolution> {
    problem.validate()?;
    if !(resolution > 0.0) {
        return Err(Error::invalid("grid resolution must be positive"));
    }
    let step_model = problem.minute_model.compose(problem.minutes_per_step);
    let bound = 0.5 * resolution * step_model.state_gain();
    if bound > 0.1 {
        return Err(Error::invalid(format!(
            "grid resolution {resolution} too coarse: per-step error bound {bound:.3} °C exceeds 0.1 °C"
        )));
    }
    let energy = |x: &[f64; 2]| x[0] + x[1];
    let mut layers: Vec<Vec<Label>> = vec![vec![Label {
        x: problem.initial,
        cost: 0.0,
        parent: usize::MAX,
        action: 0,
    }]];
    for t in 0..problem.horizon() {
        let prev = layers.last().unwrap();
        let mut index: HashMap<(i64, i64), usize> = HashMap::with_capacity(prev.len() * 2);
        let mut next: Vec<Label> = Vec::with_capacity(prev.len() * 2);
        for (pi, lab) in prev.iter().enumerate() {
            for a in 0..2u8 {
                let Some(x) = problem.advance(lab.x, t, a) else {
                    continue;
                };
                let cand = Label {
                    x,
                    cost: lab.cost + problem.step_cost(t, a),
                    parent: pi,
                    action: a,
                };
                let key = ((x[0] / resolution).floor() as i64, (x[1] / resolution).floor() as i64);
                match index.get(&key) {
                    Some(&i) => {
                        let cur = &next[i];
                        if cand.cost < cur.cost || (cand.cost == cur.cost && energy(&cand.x) > energy(&cur.x)) {
                            next[i] = cand;
                        }
                    }
                    None => {
                        index.insert(key, next.len());
                        next.push(cand);
                    }
                }
            }
        }
        if next.is_empty() {
            return Err(Error::Infeasible(format!(
                "no action keeps the room within [{}, {}] at step {t}",
                problem.t_min, problem.t_max
            )));
        }
        layers.push(next);
    }
    let last = layers.last().unwrap();
    let mut best = 0;
    for (i, l) in last.iter().enumerate() {
        let b = &last[best];
        if l.cost < b.cost || (l.cost == b.cost && energy(&l.x) > energy(&b.x)) {
            best = i;
        }
    }
    let mut actions = vec![0u8; problem.horizon()];
    let mut states = vec![[0.0; 2]; problem.horizon()];
    let mut idx = best;
    for t in (0..problem.horizon()).rev() {
        let l = layers[t + 1][idx];
        actions[t] = l.action;
        states[t] = l.x;
        idx = l.parent;
    }
    Ok(MpcSolution {
        actions,
        cost: last[best].cost,
        states,
    })
}

/// Largest horizon accepted by the exhaustive solver.
pub const EXHAUSTIVE_MAX_HORIZON: usize = 16;

/// Enumerates all `2^T` schedules and returns the cheapest feasible one
/// (lowest binary index on ties).
pub fn mpc_solve_exhaustive(problem: &MpcProblem) -> Result<MpcSolution> {
    problem.validate()?;
    let t = problem.horizon();
    if t > EXHAUSTIVE_MAX_HORIZON {
        return Err(Error::invalid(format!(
            "exhaustive search limited to {EXHAUSTIVE_MAX_HORIZON} steps, got {t}"
        )));
    }
    let mut best: Option<MpcSolution> = None;
    let mut actions = vec![0u8; t];
    for code in 0u32..(1u32 << t) {
        for (i, a) in actions.iter_mut().enumerate() {
            *a = ((code >> i) & 1) as u8;
        }
        if let Some(sol) = problem.rollout(&actions) {
            if best.as_ref().map_or(true, |b| sol.cost < b.cost) {
                best = Some(sol);
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible("no schedule keeps the room within the comfort band".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(prices: Vec<f64>, amb: f64, init: [f64; 2]) -> MpcProblem {
        let p = RcParams::default();
        let n = prices.len();
        MpcProblem::for_day(&p, MpcFrequency::Hourly, &prices, &vec![amb; n], init).unwrap()
    }

    #[test]
    fn bau_rules() {
        assert_eq!(bau_action(17.0, false), 1);
        assert_eq!(bau_action(23.0, true), 0);
        assert_eq!(bau_action(20.0, true), 1);
        assert_eq!(bau_action(20.5, true), 1);
        assert_eq!(bau_action(20.5, false), 0);
        let mut c = BauController::default();
        assert_eq!(c.action(19.0), 1);
        assert_eq!(c.action(21.0), 1);
        assert_eq!(c.action(22.0), 0);
        assert_eq!(c.action(21.0), 0);
    }

    #[test]
    fn zero_prices_cost_nothing() {
        let pr = problem(vec![0.0; 24], 5.0, [20.0, 20.0]);
        let s = mpc_solve_dp(&pr, DEFAULT_GRID).unwrap();
        assert_eq!(s.cost, 0.0);
        assert!(pr.rollout(&s.actions).is_some());
    }

    #[test]
    fn warm_building_needs_no_heat() {
        let pr = problem(vec![50.0; 24], 20.0, [21.0, 21.0]);
        let s = mpc_solve_dp(&pr, DEFAULT_GRID).unwrap();
        assert_eq!(s.actions, vec![0; 24]);
        assert_eq!(s.cost, 0.0);
    }

    #[test]
    fn single_step_cold_start_heats() {
        let pr = problem(vec![80.0], -5.0, [18.2, 16.0]);
        let s = mpc_solve_exhaustive(&pr).unwrap();
        assert_eq!(s.actions, vec![1]);
    }

    #[test]
    fn heats_in_the_cheap_slot() {
        // one heating hour needed; the mass is warm enough that the room holds otherwise
        let p = RcParams::default();
        let mut found = false;
        for tm in [17.0, 17.5, 18.0, 18.5, 19.0] {
            for tr in [18.8, 19.2, 19.6] {
                let cheap_first = problem(vec![30.0, 120.0], 5.0, [tr, tm]);
                let feasible: Vec<_> = [[0u8, 1], [1, 0], [1, 1], [0, 0]]
                    .iter()
                    .filter(|a| cheap_first.rollout(*a).is_some())
                    .map(|a| a.to_vec())
                    .collect();
                if feasible.contains(&vec![1, 0]) && feasible.contains(&vec![0, 1]) && !feasible.contains(&vec![0, 0]) {
                    assert_eq!(mpc_solve_exhaustive(&cheap_first).unwrap().actions, vec![1, 0]);
                    let cheap_last = problem(vec![120.0, 30.0], 5.0, [tr, tm]);
                    assert_eq!(mpc_solve_exhaustive(&cheap_last).unwrap().actions, vec![0, 1]);
                    found = true;
                }
            }
        }
        assert!(found, "no instance needing exactly one heating hour for {p:?}");
    }

    #[test]
    fn dp_matches_exhaustive_small() {
        let pr = problem(vec![30.0, 120.0, 120.0, 30.0, 30.0, 120.0, 60.0, 90.0], 2.0, [19.5, 19.0]);
        let a = mpc_solve_dp(&pr, DEFAULT_GRID).unwrap();
        let b = mpc_solve_exhaustive(&pr).unwrap();
        let tol = pr.grid_tolerance(&RcParams::default(), DEFAULT_GRID);
        assert!(a.cost >= b.cost - 1e-12);
        assert!(a.cost - b.cost <= tol, "{} vs {}", a.cost, b.cost);
    }

    #[test]
    fn infeasible_and_bad_inputs_reported() {
        let pr = problem(vec![50.0; 3], -20.0, [18.0001, 5.0]);
        assert!(matches!(mpc_solve_dp(&pr, DEFAULT_GRID), Err(Error::Infeasible(_))));
        let pr = problem(vec![50.0; 3], 5.0, [20.0, 20.0]);
        assert!(mpc_solve_dp(&pr, 5.0).is_err());
        let long = problem(vec![50.0; 17], 5.0, [20.0, 20.0]);
        assert!(mpc_solve_exhaustive(&long).is_err());
    }
}
