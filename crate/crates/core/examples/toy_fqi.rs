//! Extended FQI with exact lookup tables on a small chain MDP, compared with
//! value iteration.
//!
//! `cargo run --example toy_fqi`

use physq::fqi::{fqi_fit, greedy_action, AgentKind, FitOptions};
use physq::mdp::{make_observation, ExperienceBatch, ForecastBundle, Transition};
use physq::regress::RegressorSpec;

const STATES: usize = 8;

// heat moves two states up, idling one down; state 0 forces backup heat
fn step(s: usize, a: u8) -> (usize, f64) {
    match a {
        1 => ((s + 2).min(STATES - 1), 2.0),
        _ => (s.saturating_sub(1), if s == 0 { 6.0 } else { 0.0 }),
    }
}

fn main() -> physq::Result<()> {
    let mut batch = ExperienceBatch::new(0);
    for s in 0..STATES {
        for a in 0..2 {
            let (n, u) = step(s, a);
            batch.push(Transition {
                obs: make_observation(&[s as f64], &[], 0.0, 0, 0)?,
                action: a,
                next_obs: make_observation(&[n as f64], &[], 0.0, 0, 0)?,
                u_phys: u,
                hidden: None,
            })?;
        }
    }
    let horizon = 3;
    let prices = vec![30.0, 120.0, 120.0, 30.0, 30.0, 120.0];
    let fc = ForecastBundle::new(prices.clone(), vec![0.0; prices.len()])?;
    let opts = FitOptions {
        horizon,
        regressor: RegressorSpec::Lookup,
        seed: 0,
        warm_start: false,
    };
    let ens = fqi_fit(&batch, &fc, AgentKind::FqiNn, &opts)?.ensemble;

    let mut v = vec![0.0; STATES];
    let mut worst: f64 = 0.0;
    for k in (0..2 * horizon).rev() {
        let mut nv = vec![0.0; STATES];
        for s in 0..STATES {
            let q: Vec<f64> = (0..2)
                .map(|a| {
                    let (n, u) = step(s, a);
                    prices[k] * u / 1000.0 + v[n]
                })
                .collect();
            let fitted = ens.models[k].q_values(&[s as f64, 0.0])?;
            worst = worst.max((fitted[0] - q[0]).abs()).max((fitted[1] - q[1]).abs());
            nv[s] = q[0].min(q[1]);
        }
        v = nv;
    }
    println!("largest Q difference to value iteration: {worst:.2e}");
    for k in 0..horizon {
        let actions: Vec<u8> = (0..STATES)
            .map(|s| greedy_action(&ens, &make_observation(&[s as f64], &[], 0.0, k, 0).unwrap(), k, None).unwrap())
            .collect();
        println!("hour {k} (price {:5.1}): greedy actions by state {actions:?}", prices[k]);
    }
    Ok(())
}
