//! Trains PhysQ on a fixed batch, saves it, reloads it and evaluates it.
//!
//! `cargo run --release --example saved_model -- [days] [model_dir]`

use std::path::PathBuf;

use physq::fqi::AgentKind;
use physq::harness::{
    evaluate_agent, make_fixed_batches, ExperimentConfig, Planner, QAgent, SavedModel, Scenario, ScenarioKind,
};

fn main() -> physq::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let days: usize = args.get(1).map_or(6, |s| s.parse().expect("days must be an integer"));
    let dir = args.get(2).map_or_else(|| std::env::temp_dir().join("physq-model"), PathBuf::from);
    let mut cfg = ExperimentConfig::default();
    cfg.training.replicates = 1;
    cfg.training.ladder = vec![days];
    cfg.validate()?;
    let sc = Scenario::build(&cfg, ScenarioKind::Square)?;
    let batch = make_fixed_batches(&cfg, &sc).remove(0)?.remove(0);
    println!("collected {} transitions", batch.len());
    let planner = Planner::train(&cfg, AgentKind::PhysQ, &batch, cfg.training.seed)?;
    SavedModel {
        scenario: ScenarioKind::Square,
        seed: cfg.training.seed,
        config: cfg.clone(),
        planner,
    }
    .save(&dir)?;
    let model = SavedModel::load(&dir)?;
    let r = evaluate_agent(&mut QAgent::evaluator(model.planner, model.seed), &sc, &model.config)?;
    println!("model in {}: {:.3} EUR over the test days", dir.display(), r.cost_eur);
    Ok(())
}
