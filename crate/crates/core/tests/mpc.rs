use physq::harness::{evaluate_agent, BauAgent, ExperimentConfig, Scenario, ScenarioKind};
use physq::mpc::{mpc_solve_dp, mpc_solve_exhaustive, MpcFrequency, MpcProblem, DEFAULT_GRID};
use physq::thermal::{env_step_hour, RcParams, SimState, COMFORT_MAX, COMFORT_MIN};
use physq::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::random_mpc_problem;

fn feasible_instances(n: usize, len: usize, seed: u64) -> Vec<MpcProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let pr = random_mpc_problem(&mut rng, len);
        match mpc_solve_exhaustive(&pr) {
            Ok(_) => out.push(pr),
            Err(Error::Infeasible(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
    out
}

#[test]
fn dp_agrees_with_enumeration_on_random_days() {
    let p = RcParams::default();
    for pr in feasible_instances(20, 12, 3) {
        let ex = mpc_solve_exhaustive(&pr).unwrap();
        let dp = mpc_solve_dp(&pr, DEFAULT_GRID).unwrap();
        let tol = pr.grid_tolerance(&p, DEFAULT_GRID);
        assert!(dp.cost >= ex.cost - 1e-9);
        assert!(dp.cost - ex.cost <= tol, "dp {} exhaustive {} tol {tol}", dp.cost, ex.cost);
    }
}

#[test]
fn dp_schedules_stay_comfortable_on_the_simulator() {
    let p = RcParams::default();
    for pr in feasible_instances(10, 10, 11) {
        let sol = mpc_solve_dp(&pr, DEFAULT_GRID).unwrap();
        let mut s = SimState::new(pr.initial[0], pr.initial[1]);
        for (t, &a) in sol.actions.iter().enumerate() {
            let out = env_step_hour(s, &p, a, pr.t_ambient[t]).unwrap();
            assert_eq!(out.minutes_overridden, 0, "the backup had to step in at hour {t}");
            s = out.state;
            assert!(s.t_room >= COMFORT_MIN - 1e-6 && s.t_room <= COMFORT_MAX + 1e-6);
        }
    }
}

#[test]
fn quarter_hours_never_cost_more_than_hours() {
    let p = RcParams::default();
    let prices: Vec<f64> = (0..24).map(|h| if (7..15).contains(&h) { 120.0 } else { 30.0 }).collect();
    let amb: Vec<f64> = (0..24).map(|h| 5.0 + 4.0 * ((h as f64 - 9.0) / 24.0 * std::f64::consts::TAU).sin()).collect();
    let h = MpcProblem::for_day(&p, MpcFrequency::Hourly, &prices, &amb, [20.0, 20.0]).unwrap();
    let q = MpcProblem::for_day(&p, MpcFrequency::Quarterly, &prices, &amb, [20.0, 20.0]).unwrap();
    assert_eq!(q.horizon(), 96);
    let ch = mpc_solve_dp(&h, DEFAULT_GRID).unwrap().cost;
    let cq = mpc_solve_dp(&q, DEFAULT_GRID).unwrap().cost;
    assert!(cq <= ch + q.grid_tolerance(&p, DEFAULT_GRID), "quarterly {cq} hourly {ch}");
}

#[test]
fn bau_on_free_power_costs_nothing() {
    let cfg = ExperimentConfig::default();
    let sq = Scenario::build(&cfg, ScenarioKind::Square).unwrap();
    let zero = vec![0.0; sq.prices.values.len()];
    let free = Scenario::from_series(
        ScenarioKind::Square,
        physq::thermal::PriceSeries::new(zero, 0).unwrap(),
        sq.weather.clone(),
        cfg.training.train_days,
        cfg.training.test_days,
    )
    .unwrap();
    let r = evaluate_agent(&mut BauAgent::default(), &free, &cfg).unwrap();
    assert_eq!(r.cost_eur, 0.0);
    assert_eq!(r.daily_costs.len(), cfg.training.test_days);
}
