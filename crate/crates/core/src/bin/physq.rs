use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use physq::fqi::AgentKind;
use physq::harness::{
    evaluate_agent_traced, make_fixed_batches, parse_experiments, run_experiment_suite,
    run_growing_batch, BauAgent, Controller, ExperimentConfig, MpcAgent, Planner, QAgent, SavedModel,
    Scenario, ScenarioKind,
};
use physq::mpc::MpcFrequency;
use physq::thermal::{generate_square_prices, generate_weather, step_hour_with, SimState, HOURS_PER_DAY};
use physq::{Error, Result};

#[derive(Parser)]
#[command(name = "physq", version, about = "Demand-response heating control experiments")]
struct Cli {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Growing,
    Fixed,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the thermostat on generated weather and square-wave prices; CSV on stdout.
    Simulate {
        #[arg(long, default_value_t = 1)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one agent and save it to a model directory.
    Train {
        #[arg(long, value_parser = parse_agent)]
        agent: AgentKind,
        #[arg(long, value_enum, default_value = "growing")]
        strategy: Strategy,
        #[arg(long, value_parser = parse_scenario, default_value = "square")]
        scenario: ScenarioKind,
        /// Batch size in days for the fixed strategy; defaults to all training days.
        #[arg(long)]
        days: Option<usize>,
        #[arg(long, default_value = "model")]
        out: PathBuf,
    },
    /// Evaluate a saved model on the held-out days; hourly CSV on stdout.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the MPC benchmark on the held-out days; hourly CSV on stdout.
    Mpc {
        #[arg(long, value_parser = parse_freq, default_value = "hourly")]
        freq: MpcFrequency,
        #[arg(long, value_parser = parse_scenario, default_value = "square")]
        scenario: ScenarioKind,
    },
    /// Physics-prior ablation (experiment 3).
    Ablate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run experiments, e.g. `--experiment 1` or `--experiment 1,2,3`.
    Suite {
        #[arg(long, default_value = "1,2,3")]
        experiment: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_agent(s: &str) -> std::result::Result<AgentKind, String> {
    AgentKind::parse(s).map_err(|e| e.to_string())
}

fn parse_scenario(s: &str) -> std::result::Result<ScenarioKind, String> {
    ScenarioKind::parse(s).map_err(|e| e.to_string())
}

fn parse_freq(s: &str) -> std::result::Result<MpcFrequency, String> {
    MpcFrequency::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Simulate { days, seed } => simulate(&cfg, days, seed),
        Cmd::Train {
            agent,
            strategy,
            scenario,
            days,
            out,
        } => train(&cfg, agent, strategy, scenario, days, &out),
        Cmd::Evaluate { model } => {
            let m = SavedModel::load(&model)?;
            let scenario = Scenario::build(&m.config, m.scenario)?;
            let mut agent = QAgent::evaluator(m.planner, m.seed);
            report(&mut agent, &scenario, &m.config)
        }
        Cmd::Mpc { freq, scenario } => {
            let scenario = Scenario::build(&cfg, scenario)?;
            let mut mpc = MpcAgent::new(cfg.building, freq, cfg.training.mpc_grid);
            report(&mut mpc, &scenario, &cfg)
        }
        Cmd::Ablate { out } => suite(&cfg, &[3], out),
        Cmd::Suite { experiment, out } => suite(&cfg, &parse_experiments(&experiment)?, out),
    }
}

fn simulate(cfg: &ExperimentConfig, days: usize, seed: u64) -> Result<()> {
    if days == 0 {
        return Err(Error::invalid("--days must be at least 1"));
    }
    let prices = generate_square_prices(days, seed)?;
    let weather = generate_weather(days, seed)?;
    let mut state = SimState::new(cfg.training.initial_state[0], cfg.training.initial_state[1]);
    let mut bau = BauAgent::default();
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["day", "hour", "price", "t_ambient", "t_room", "t_mass", "u_phys", "cost_eur"])?;
    for i in 0..days * HOURS_PER_DAY {
        let t_a = weather.values[i];
        let out = step_hour_with(state, &cfg.building, t_a, |m, tr| bau.minute_request(i, m, tr, 0))?;
        let cost = prices.values[i] * out.u_phys_avg / 1000.0;
        w.write_record(&[
            (i / HOURS_PER_DAY).to_string(),
            (i % HOURS_PER_DAY).to_string(),
            prices.values[i].to_string(),
            format!("{t_a:.3}"),
            format!("{:.3}", state.t_room),
            format!("{:.3}", state.t_mass),
            format!("{:.3}", out.u_phys_avg),
            format!("{cost:.4}"),
        ])?;
        state = out.state;
    }
    w.flush().map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn train(
    cfg: &ExperimentConfig,
    kind: AgentKind,
    strategy: Strategy,
    scenario_kind: ScenarioKind,
    days: Option<usize>,
    out: &Path,
) -> Result<()> {
    let scenario = Scenario::build(cfg, scenario_kind)?;
    let seed = cfg.training.seed;
    let planner = match strategy {
        Strategy::Growing => {
            let run = run_growing_batch(cfg, &scenario, kind, seed, &[])?;
            let mut log = std::io::stderr().lock();
            for d in &run.daily {
                let _ = writeln!(log, "day {:2}  epsilon {:.3}  cost {:.3} EUR", d.day, d.epsilon, d.cost_eur);
            }
            run.planner
        }
        Strategy::Fixed => {
            let days = days.unwrap_or(cfg.training.train_days);
            let mut one = cfg.clone();
            one.training.replicates = 1;
            one.training.ladder = vec![days];
            one.validate()?;
            let batches = make_fixed_batches(&one, &scenario).remove(0)?;
            Planner::train(cfg, kind, &batches[0], seed)?
        }
    };
    let model = SavedModel {
        scenario: scenario_kind,
        seed,
        config: cfg.clone(),
        planner,
    };
    model.save(out)?;
    eprintln!(
        "saved {} trained on {} transitions to {}",
        kind.name(),
        model.planner.batch.len(),
        out.display()
    );
    Ok(())
}

fn report(ctrl: &mut dyn Controller, scenario: &Scenario, cfg: &ExperimentConfig) -> Result<()> {
    let (res, trace) = evaluate_agent_traced(ctrl, scenario, cfg)?;
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["day", "hour", "price", "t_ambient", "t_room", "t_mass", "action", "u_phys"])?;
    for (i, t) in trace.iter().enumerate() {
        let day = i / HOURS_PER_DAY;
        let hour = t.obs.timeslot;
        w.write_record(&[
            day.to_string(),
            hour.to_string(),
            scenario.price(scenario.test_day(day), hour).to_string(),
            format!("{:.3}", t.obs.t_ambient),
            format!("{:.3}", t.obs.t_room()),
            t.hidden.map_or_else(String::new, |h| format!("{:.3}", h[0])),
            t.action.to_string(),
            format!("{:.3}", t.u_phys),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<stdout>", e))?;
    eprintln!(
        "{} on {}: {:.3} EUR over {} test days, {} minutes outside the comfort band",
        res.agent,
        res.scenario,
        res.cost_eur,
        res.daily_costs.len(),
        res.violation_minutes
    );
    Ok(())
}

fn suite(cfg: &ExperimentConfig, experiments: &[u8], out: Option<PathBuf>) -> Result<()> {
    let dir = out.unwrap_or_else(|| cfg.paths.out_dir.clone());
    let res = run_experiment_suite(cfg, experiments)?;
    res.write(cfg, &dir)?;
    print!("{}", res.summary_text(cfg));
    eprintln!("tables written to {}", dir.display());
    Ok(())
}
