//! Evaluates the thermostat and both MPC benchmarks on the held-out days.
//!
//! `cargo run --release --example baselines -- [square|belpex]`

use physq::harness::{evaluate_agent, BauAgent, Controller, ExperimentConfig, MpcAgent, Scenario, ScenarioKind};
use physq::mpc::MpcFrequency;

fn main() -> physq::Result<()> {
    let kind = ScenarioKind::parse(&std::env::args().nth(1).unwrap_or_else(|| "square".into()))?;
    let cfg = ExperimentConfig::default();
    let scenario = Scenario::build(&cfg, kind)?;
    let grid = cfg.training.mpc_grid;
    let mut controllers: Vec<Box<dyn Controller>> = vec![
        Box::new(BauAgent::default()),
        Box::new(MpcAgent::new(cfg.building, MpcFrequency::Hourly, grid)),
        Box::new(MpcAgent::new(cfg.building, MpcFrequency::Quarterly, grid)),
    ];
    for c in controllers.iter_mut() {
        let r = evaluate_agent(c.as_mut(), &scenario, &cfg)?;
        let days: Vec<String> = r.daily_costs.iter().map(|c| format!("{c:.3}")).collect();
        println!(
            "{:14} {:8.3} EUR  days [{}]  outside band {} min  T_r in [{:.2}, {:.2}]",
            r.agent, r.cost_eur, days.join(", "), r.violation_minutes, r.min_t_room, r.max_t_room
        );
    }
    Ok(())
}
