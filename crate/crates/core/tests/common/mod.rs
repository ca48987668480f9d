//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use physq::mdp::{make_observation, ExperienceBatch, Transition};
use physq::mpc::{MpcFrequency, MpcProblem};
use physq::thermal::RcParams;
use rand::Rng;

type M2 = [[f64; 2]; 2];

fn mm(x: &M2, y: &M2) -> M2 {
    let mut r = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    r
}

// exp(M) by scaling and squaring of a 20-term Taylor series
fn expm(m: &M2) -> M2 {
    let s = 8;
    let k = 2f64.powi(s);
    let a = [[m[0][0] / k, m[0][1] / k], [m[1][0] / k, m[1][1] / k]];
    let mut sum = [[1.0, 0.0], [0.0, 1.0]];
    let mut term = sum;
    for n in 1..20 {
        term = mm(&term, &a);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= n as f64;
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        sum = mm(&sum, &sum);
    }
    sum
}

/// Exact solution of the RC ODE after `hours` with constant inputs, via the
/// augmented matrix exponential.
pub fn exact_rc(p: &RcParams, x0: [f64; 2], u: f64, ta: f64, hours: f64) -> [f64; 2] {
    let (cr, cm, rrm, rra) = (p.room_capacity, p.mass_capacity, p.resist_room_mass, p.resist_room_ambient);
    let a = [
        [-(1.0 / rrm + 1.0 / rra) / cr, 1.0 / (rrm * cr)],
        [1.0 / (rrm * cm), -1.0 / (rrm * cm)],
    ];
    let forcing = [(u + ta / rra) / cr, 0.0];
    // Solve A x* = -forcing for the equilibrium, then x(t) = x* + e^{At}(x0 - x*).
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let xs = [
        (-forcing[0] * a[1][1] + forcing[1] * a[0][1]) / det,
        (-forcing[1] * a[0][0] + forcing[0] * a[1][0]) / det,
    ];
    let e = expm(&[[a[0][0] * hours, a[0][1] * hours], [a[1][0] * hours, a[1][1] * hours]]);
    let d = [x0[0] - xs[0], x0[1] - xs[1]];
    [
        xs[0] + e[0][0] * d[0] + e[0][1] * d[1],
        xs[1] + e[1][0] * d[0] + e[1][1] * d[1],
    ]
}


// Finite-horizon toy MDP on integer room temperatures.
pub const STATES: usize = 20;

pub fn next_state(s: usize, a: u8) -> usize {
    if a == 1 {
        (s + 2).min(STATES - 1)
    } else {
        s.saturating_sub(1)
    }
}

// Cold states force backup heat even when the agent asks for nothing.
pub fn power(s: usize, a: u8) -> f64 {
    match (a, s < 3) {
        (1, _) => 2.0,
        (0, true) => 5.0,
        _ => 0.0,
    }
}

pub fn toy_batch() -> ExperienceBatch {
    let mut b = ExperienceBatch::new(0);
    for s in 0..STATES {
        for a in 0..2u8 {
            let sn = next_state(s, a);
            b.push(Transition {
                obs: make_observation(&[s as f64], &[], 0.0, 0, 0).unwrap(),
                action: a,
                next_obs: make_observation(&[sn as f64], &[], 0.0, 1, 0).unwrap(),
                u_phys: power(s, a),
                hidden: Some([s as f64, sn as f64]),
            })
            .unwrap();
        }
    }
    b
}

/// Exhaustive finite-horizon value iteration; `q[k][s][a]`.
pub fn value_iteration(prices: &[f64]) -> Vec<[[f64; 2]; STATES]> {
    let h2 = prices.len();
    let mut q: Vec<[[f64; 2]; STATES]> = vec![[[0.0; 2]; STATES]; h2];
    for k in (0..h2).rev() {
        for s in 0..STATES {
            for a in 0..2u8 {
                let mut v = prices[k] * power(s, a) / 1000.0;
                if k + 1 < h2 {
                    let n = q[k + 1][next_state(s, a)];
                    v += n[0].min(n[1]);
                }
                q[k][s][a as usize] = v;
            }
        }
    }
    q
}


pub fn toy_prices(horizon: usize) -> Vec<f64> {
    (0..2 * horizon).map(|k| 20.0 + 37.0 * ((k * 7) % 5) as f64).collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Random hourly MPC instance of `len` steps.
pub fn random_mpc_problem(rng: &mut impl Rng, len: usize) -> MpcProblem {
    let p = RcParams::default();
    let prices: Vec<f64> = (0..len).map(|_| rng.gen_range(10.0..150.0)).collect();
    let base = rng.gen_range(-2.0..12.0);
    let amb: Vec<f64> = (0..len).map(|_| base + rng.gen_range(-1.0..1.0)).collect();
    let init = [rng.gen_range(18.3..21.7), rng.gen_range(17.0..22.0)];
    MpcProblem::for_day(&p, MpcFrequency::Hourly, &prices, &amb, init).unwrap()
}
