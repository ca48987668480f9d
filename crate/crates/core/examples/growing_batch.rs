//! Runs one growing-batch training session and evaluates the final agent.
//!
//! `cargo run --release --example growing_batch -- [agent] [scenario] [days]`

use std::time::Instant;

use physq::fqi::AgentKind;
use physq::harness::{evaluate_agent, run_growing_batch, ExperimentConfig, QAgent, Scenario, ScenarioKind};

fn main() -> physq::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let kind = AgentKind::parse(args.get(1).map(String::as_str).unwrap_or("fqi-nn"))?;
    let scen = ScenarioKind::parse(args.get(2).map(String::as_str).unwrap_or("square"))?;
    let mut cfg = ExperimentConfig::default();
    if let Some(d) = args.get(3) {
        cfg.training.train_days = d.parse().expect("days must be an integer");
    }
    let scenario = Scenario::build(&cfg, scen)?;

    let t0 = Instant::now();
    let run = run_growing_batch(&cfg, &scenario, kind, cfg.training.seed, &[])?;
    println!("training took {:.1?}", t0.elapsed());
    for row in &run.daily {
        println!("day {:2}  eps {:.3}  cost {:7.3} EUR", row.day, row.epsilon, row.cost_eur);
    }

    let t1 = Instant::now();
    let mut agent = QAgent::evaluator(run.planner, cfg.training.seed);
    let r = evaluate_agent(&mut agent, &scenario, &cfg)?;
    println!("evaluation took {:.1?}", t1.elapsed());
    println!(
        "{} on {}: {:.3} EUR over {} test days, {} minutes outside band",
        r.agent, r.scenario, r.cost_eur, r.daily_costs.len(), r.violation_minutes
    );
    Ok(())
}
