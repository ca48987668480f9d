//! Trains the physics-informed encoder with both priors on random-action
//! data and reports how well `ẑ` tracks the simulator's mass temperature.
//!
//! `cargo run --release --example encoder_training -- [days]`

use physq::encoder::{freeze_and_annotate, train_encoder, PhysicsPrior};
use physq::fqi::AgentKind;
use physq::harness::{run_day, Episode, ExperimentConfig, QAgent, Scenario, ScenarioKind};
use physq::mdp::ExperienceBatch;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn collect(cfg: &ExperimentConfig, sc: &Scenario, days: impl Iterator<Item = usize>, seed: u64) -> physq::Result<ExperienceBatch> {
    let mut agent = QAgent::new(AgentKind::PhysQ, seed);
    let mut ep = Episode::new(cfg.training.initial_state, cfg.training.history_depth);
    let mut b = ExperienceBatch::new(seed);
    for d in days {
        for t in run_day(&mut agent, sc, &cfg.building, d, &mut ep)?.transitions {
            b.push(t)?;
        }
    }
    Ok(b)
}

fn main() -> physq::Result<()> {
    let days: usize = std::env::args().nth(1).map_or(30, |s| s.parse().expect("days must be an integer"));
    let cfg = ExperimentConfig::default();
    let sc = Scenario::build(&cfg, ScenarioKind::Square)?;
    let train = collect(&cfg, &sc, 0..days.min(sc.train_days), 1)?;
    let test = collect(&cfg, &sc, (0..sc.test_days).map(|j| sc.test_day(j)), 2)?;
    let truth: Vec<f64> = test.transitions.iter().map(|t| t.hidden.expect("simulator records T_m")[0]).collect();
    for prior in [PhysicsPrior::Correct, PhysicsPrior::Wrong] {
        let fit = train_encoder(&train, &cfg.training.encoder, prior)?;
        let z: Vec<f64> = freeze_and_annotate(&fit.bundle, &test)?.latent.iter().map(|l| l[0]).collect();
        let last = fit.history.last().expect("at least one epoch");
        println!(
            "{:7} prior: {} epochs, L_pred {:.2e}, L_phys {:.2e}, corr(z, T_m) on held-out days {:.3}",
            prior.name(),
            fit.history.len(),
            last.pred,
            last.phys,
            pearson(&z, &truth)
        );
        println!("        identified coefficients {:?}", fit.bundle.omega);
    }
    Ok(())
}
