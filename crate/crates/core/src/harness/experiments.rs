//! The three experiments: growing-batch training against the benchmarks,
//! the fixed-batch ladder across agent kinds, and the physics-prior ablation.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fqi::AgentKind;
use crate::mdp::ExperienceBatch;
use crate::mpc::MpcFrequency;

use super::config::ExperimentConfig;
use super::rollout::{
    evaluate_agent, evaluate_agent_traced, run_growing_batch, BauAgent, DailyRow, MpcAgent, Planner,
    QAgent, RunResult,
};
use super::scenario::Scenario;

/// Agents compared on the fixed-batch ladder.
pub const LADDER_AGENTS: [AgentKind; 3] = [AgentKind::PhysQ, AgentKind::FqiNn, AgentKind::FqiEt];
/// Physics priors compared in the ablation.
pub const ABLATION_AGENTS: [AgentKind; 2] = [AgentKind::PhysQ, AgentKind::PhysQWrong];

/// Seed of the data collector for replicate `r`.
pub fn collector_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    cfg.training.seed.wrapping_add(1000 * (r as u64 + 1))
}

/// Seed for training agent `kind` on replicate `r`'s batch of `days` days.
pub fn cell_seed(cfg: &ExperimentConfig, kind: AgentKind, days: usize, r: usize) -> u64 {
    let k = kind as u64 + 1;
    let mut h = cfg.training.seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [k, days as u64, r as u64] {
        h = (h ^ v).wrapping_mul(0x100_0000_01B3).rotate_left(17);
    }
    h
}

/// Runs the ε-greedy FQI-NN collector once per replicate and snapshots its
/// batch at each ladder size. Replicates fail independently.
pub fn make_fixed_batches(cfg: &ExperimentConfig, scenario: &Scenario) -> Vec<Result<Vec<ExperienceBatch>>> {
    let ladder = &cfg.training.ladder;
    (0..cfg.training.replicates)
        .into_par_iter()
        .map(|r| {
            let run = run_growing_batch(cfg, scenario, AgentKind::FqiNn, collector_seed(cfg, r), ladder)?;
            if run.snapshots.len() != ladder.len() {
                return Err(Error::invalid("collector did not reach every ladder size"));
            }
            for b in &run.snapshots {
                scenario.audit_batch(b)?;
            }
            Ok(run.snapshots)
        })
        .collect()
}

/// BAU, hourly MPC and quarterly MPC on the held-out days.
pub fn reference_runs(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<RunResult>> {
    let grid = cfg.training.mpc_grid;
    let mut out = vec![evaluate_agent(&mut BauAgent::default(), scenario, cfg)?];
    for freq in [MpcFrequency::Hourly, MpcFrequency::Quarterly] {
        out.push(evaluate_agent(&mut MpcAgent::new(cfg.building, freq, grid), scenario, cfg)?);
    }
    Ok(out)
}

/// One hour of an evaluation rollout, for plotting.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub day: usize,
    pub hour: usize,
    pub price: f64,
    pub t_ambient: f64,
    pub t_room: f64,
    pub t_mass: f64,
    pub action: u8,
    pub u_phys: f64,
}

/// A failed cell, reported without stopping the others.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub scenario: String,
    pub what: String,
    pub error: String,
}

/// Everything the suite produced.
#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub experiments: Vec<u8>,
    /// BAU and MPC runs, one set per scenario.
    pub references: Vec<RunResult>,
    /// Growing-batch agents evaluated after training.
    pub growing: Vec<RunResult>,
    /// Training logs of the growing-batch agents, tagged by scenario.
    pub daily: Vec<(String, DailyRow)>,
    /// Evaluation trace of the first growing-batch PhysQ run per scenario.
    pub traces: Vec<(String, Vec<TraceRow>)>,
    /// Fixed-batch cells of the ladder and the ablation.
    pub fixed: Vec<RunResult>,
    pub failures: Vec<Failure>,
}

/// Mean and sample standard deviation over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSummary {
    pub scenario: String,
    pub agent: String,
    pub batch_days: usize,
    pub mean_cost_eur: f64,
    pub std_cost_eur: f64,
    pub n: usize,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl SuiteOutput {
    fn find<'a>(rows: &'a [RunResult], scenario: &str, agent: &str) -> Option<&'a RunResult> {
        rows.iter().find(|r| r.scenario == scenario && r.agent == agent)
    }

    pub fn reference(&self, scenario: &str, agent: &str) -> Option<&RunResult> {
        Self::find(&self.references, scenario, agent)
    }

    pub fn growing_result(&self, scenario: &str, agent: &str) -> Option<&RunResult> {
        Self::find(&self.growing, scenario, agent)
    }

    pub fn summarize(&self, scenario: &str, agent: &str, batch_days: usize) -> Option<CostSummary> {
        let costs: Vec<f64> = self
            .fixed
            .iter()
            .filter(|r| r.scenario == scenario && r.agent == agent && r.batch_days == batch_days)
            .map(|r| r.cost_eur)
            .collect();
        if costs.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(&costs);
        Some(CostSummary {
            scenario: scenario.into(),
            agent: agent.into(),
            batch_days,
            mean_cost_eur: mean,
            std_cost_eur: std,
            n: costs.len(),
        })
    }

    /// Every evaluation run of every controller.
    pub fn all_runs(&self) -> impl Iterator<Item = &RunResult> {
        self.references.iter().chain(&self.growing).chain(&self.fixed)
    }
}

/// Growing-batch training of each configured agent, then greedy evaluation.
pub fn experiment1(cfg: &ExperimentConfig, scenario: &Scenario, out: &mut SuiteOutput) {
    let name = scenario.kind.name().to_string();
    let cells: Vec<(AgentKind, usize)> = cfg
        .training
        .agents
        .iter()
        .flat_map(|&k| (0..cfg.training.growing_replicates).map(move |g| (k, g)))
        .collect();
    let runs: Vec<_> = cells
        .par_iter()
        .map(|&(kind, g)| -> Result<_> {
            let seed = cfg.training.seed.wrapping_add(g as u64);
            let run = run_growing_batch(cfg, scenario, kind, seed, &[])?;
            scenario.audit_batch(&run.batch)?;
            let mut agent = QAgent::evaluator(run.planner, seed);
            let (mut res, trace) = evaluate_agent_traced(&mut agent, scenario, cfg)?;
            res.batch_days = cfg.training.train_days;
            res.replicate = g;
            Ok((res, run.daily, trace))
        })
        .collect();
    for ((kind, g), r) in cells.into_iter().zip(runs) {
        match r {
            Ok((res, daily, trace)) => {
                if kind == AgentKind::PhysQ && g == 0 {
                    out.traces.push((name.clone(), trace_rows(scenario, &trace)));
                }
                out.daily.extend(daily.into_iter().map(|d| (name.clone(), d)));
                out.growing.push(res);
            }
            Err(e) => out.failures.push(Failure {
                scenario: name.clone(),
                what: format!("growing {} replicate {g}", kind.name()),
                error: e.to_string(),
            }),
        }
    }
}

fn trace_rows(scenario: &Scenario, trace: &[crate::mdp::Transition]) -> Vec<TraceRow> {
    trace
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let day = i / crate::thermal::HOURS_PER_DAY;
            let hour = t.obs.timeslot;
            TraceRow {
                day,
                hour,
                price: scenario.price(scenario.test_day(day), hour),
                t_ambient: t.obs.t_ambient,
                t_room: t.obs.t_room(),
                t_mass: t.hidden.map_or(f64::NAN, |h| h[0]),
                action: t.action,
                u_phys: t.u_phys,
            }
        })
        .collect()
}

/// Trains every `kind` on every replicate's ladder and evaluates it.
pub fn fixed_batch_study(cfg: &ExperimentConfig, scenario: &Scenario, kinds: &[AgentKind], out: &mut SuiteOutput) {
    let ladders = make_fixed_batches(cfg, scenario);
    let plan: Vec<(AgentKind, Vec<usize>)> = kinds.iter().map(|&k| (k, cfg.training.ladder.clone())).collect();
    evaluate_ladders(cfg, scenario, &ladders, &plan, out);
}

/// Evaluates a subset of ladder cells: each `(kind, sizes)` entry trains
/// `kind` on the listed batch sizes of every replicate.
pub fn evaluate_ladders(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    ladders: &[Result<Vec<ExperienceBatch>>],
    plan: &[(AgentKind, Vec<usize>)],
    out: &mut SuiteOutput,
) {
    let name = scenario.kind.name().to_string();
    let mut cells = Vec::new();
    for (r, ladder) in ladders.iter().enumerate() {
        match ladder {
            Ok(batches) => {
                for (days, batch) in cfg.training.ladder.iter().zip(batches) {
                    for (kind, sizes) in plan {
                        if sizes.contains(days) {
                            cells.push((*kind, *days, r, batch));
                        }
                    }
                }
            }
            Err(e) => out.failures.push(Failure {
                scenario: name.clone(),
                what: format!("collector replicate {r}"),
                error: e.to_string(),
            }),
        }
    }
    let runs: Vec<Result<RunResult>> = cells
        .par_iter()
        .map(|&(kind, days, r, batch)| {
            let seed = cell_seed(cfg, kind, days, r);
            let planner = Planner::train(cfg, kind, batch, seed)?;
            let mut agent = QAgent::evaluator(planner, seed);
            let mut res = evaluate_agent(&mut agent, scenario, cfg)?;
            res.batch_days = days;
            res.replicate = r;
            Ok(res)
        })
        .collect();
    for ((kind, days, r, _), res) in cells.into_iter().zip(runs) {
        match res {
            Ok(res) => out.fixed.push(res),
            Err(e) => out.failures.push(Failure {
                scenario: name.clone(),
                what: format!("{} at {days} days, replicate {r}", kind.name()),
                error: e.to_string(),
            }),
        }
    }
}

/// Runs the requested experiments (1, 2 and/or 3) on every configured
/// scenario. Cell failures are collected in the output rather than aborting.
pub fn run_experiment_suite(cfg: &ExperimentConfig, experiments: &[u8]) -> Result<SuiteOutput> {
    cfg.validate()?;
    if let Some(e) = experiments.iter().find(|e| !(1..=3).contains(*e)) {
        return Err(Error::invalid(format!("unknown experiment {e}")));
    }
    let mut out = SuiteOutput {
        experiments: experiments.to_vec(),
        ..SuiteOutput::default()
    };
    let mut kinds: Vec<AgentKind> = Vec::new();
    if experiments.contains(&2) {
        kinds.extend(LADDER_AGENTS);
    }
    if experiments.contains(&3) {
        kinds.extend(ABLATION_AGENTS.iter().filter(|k| !kinds.contains(k)).collect::<Vec<_>>());
    }
    for &kind in &cfg.prices.scenarios {
        let scenario = Scenario::build(cfg, kind)?;
        match reference_runs(cfg, &scenario) {
            Ok(r) => out.references.extend(r),
            Err(e) => out.failures.push(Failure {
                scenario: kind.name().into(),
                what: "benchmarks".into(),
                error: e.to_string(),
            }),
        }
        if experiments.contains(&1) {
            experiment1(cfg, &scenario, &mut out);
        }
        if !kinds.is_empty() {
            fixed_batch_study(cfg, &scenario, &kinds, &mut out);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ResultRow<'a> {
    scenario: &'a str,
    agent: &'a str,
    batch_days: usize,
    replicate: usize,
    cost_eur: f64,
    violation_min: u32,
}

#[derive(Serialize)]
struct DailyCsvRow<'a> {
    day: usize,
    agent: &'a str,
    cost_eur: f64,
    epsilon: f64,
}

#[derive(Serialize)]
struct TableRow<'a> {
    scenario: &'a str,
    controller: &'a str,
    cost_eur: f64,
    saving_vs_bau_pct: f64,
}

#[derive(Serialize)]
struct FigureRow<'a> {
    #[serde(flatten)]
    summary: &'a CostSummary,
    bau_cost_eur: f64,
    mpc_hourly_cost_eur: f64,
    mpc_quarterly_cost_eur: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn result_rows(rows: &[RunResult]) -> Vec<ResultRow<'_>> {
    rows.iter()
        .map(|r| ResultRow {
            scenario: &r.scenario,
            agent: &r.agent,
            batch_days: r.batch_days,
            replicate: r.replicate,
            cost_eur: r.cost_eur,
            violation_min: r.violation_minutes,
        })
        .collect()
}

impl SuiteOutput {
    fn scenarios(&self) -> Vec<String> {
        let mut s: Vec<String> = self.references.iter().map(|r| r.scenario.clone()).collect();
        s.dedup();
        s
    }

    fn figure_rows(&self, agents: &[AgentKind], ladder: &[usize]) -> Vec<(CostSummary, [f64; 3])> {
        let mut rows = Vec::new();
        for sc in self.scenarios() {
            let refs = ["bau", "mpc-hourly", "mpc-quarterly"]
                .map(|a| self.reference(&sc, a).map_or(f64::NAN, |r| r.cost_eur));
            for kind in agents {
                for &d in ladder {
                    if let Some(s) = self.summarize(&sc, kind.name(), d) {
                        rows.push((s, refs));
                    }
                }
            }
        }
        rows
    }

    /// Writes CSV tables, figure data and `summary.txt` under `dir`.
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ladder = &cfg.training.ladder;
        if self.experiments.contains(&1) {
            let d = dir.join("experiment1");
            let mut rows = self.references.clone();
            rows.extend(self.growing.iter().cloned());
            write_csv(&d.join("results.csv"), result_rows(&rows))?;
            let mut table = Vec::new();
            for r in &rows {
                let bau = self.reference(&r.scenario, "bau").map_or(f64::NAN, |b| b.cost_eur);
                table.push(TableRow {
                    scenario: &r.scenario,
                    controller: &r.agent,
                    cost_eur: r.cost_eur,
                    saving_vs_bau_pct: 100.0 * (bau - r.cost_eur) / bau,
                });
            }
            write_csv(&d.join("table1.csv"), table)?;
            for sc in self.scenarios() {
                let daily = self.daily.iter().filter(|(s, _)| *s == sc).map(|(_, r)| DailyCsvRow {
                    day: r.day,
                    agent: &r.agent,
                    cost_eur: r.cost_eur,
                    epsilon: r.epsilon,
                });
                write_csv(&d.join(&sc).join("daily.csv"), daily)?;
            }
            for (sc, trace) in &self.traces {
                write_csv(&d.join(sc).join("trajectory.csv"), trace)?;
            }
        }
        for (exp, agents) in [(2u8, &LADDER_AGENTS[..]), (3u8, &ABLATION_AGENTS[..])] {
            if !self.experiments.contains(&exp) {
                continue;
            }
            let d = dir.join(format!("experiment{exp}"));
            let names: Vec<&str> = agents.iter().map(|k| k.name()).collect();
            let rows: Vec<RunResult> =
                self.fixed.iter().filter(|r| names.contains(&r.agent.as_str())).cloned().collect();
            write_csv(&d.join("results.csv"), result_rows(&rows))?;
            let fig = self.figure_rows(agents, ladder);
            write_csv(
                &d.join("summary.csv"),
                fig.iter().map(|(s, refs)| FigureRow {
                    summary: s,
                    bau_cost_eur: refs[0],
                    mpc_hourly_cost_eur: refs[1],
                    mpc_quarterly_cost_eur: refs[2],
                }),
            )?;
        }
        let path = dir.join("summary.txt");
        fs::write(&path, self.summary_text(cfg)).map_err(|e| Error::io(&path, e))
    }

    /// Plain-text report of all experiments that ran.
    pub fn summary_text(&self, cfg: &ExperimentConfig) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for sc in self.scenarios() {
            let _ = writeln!(s, "== scenario {sc}");
            let bau = self.reference(&sc, "bau").map_or(f64::NAN, |b| b.cost_eur);
            let _ = writeln!(s, "benchmarks and growing-batch agents (5-day cost, EUR):");
            for r in self.references.iter().chain(&self.growing).filter(|r| r.scenario == sc) {
                let _ = writeln!(
                    s,
                    "  {:<14} {:>9.3}  saving vs bau {:>6.2}%  outside band {} min",
                    r.agent,
                    r.cost_eur,
                    100.0 * (bau - r.cost_eur) / bau,
                    r.violation_minutes
                );
            }
            for (exp, agents) in [(2u8, &LADDER_AGENTS[..]), (3u8, &ABLATION_AGENTS[..])] {
                if !self.experiments.contains(&exp) {
                    continue;
                }
                let _ = writeln!(s, "experiment {exp}: mean ± std over replicates (EUR):");
                for kind in agents {
                    let cells: Vec<String> = cfg
                        .training
                        .ladder
                        .iter()
                        .filter_map(|&d| self.summarize(&sc, kind.name(), d))
                        .map(|c| format!("{}d {:.3}±{:.3} (n={})", c.batch_days, c.mean_cost_eur, c.std_cost_eur, c.n))
                        .collect();
                    let _ = writeln!(s, "  {:<12} {}", kind.name(), cells.join("  "));
                }
            }
        }
        if self.failures.is_empty() {
            s.push_str("no failed cells\n");
        } else {
            let _ = writeln!(s, "{} failed cells:", self.failures.len());
            for f in &self.failures {
                let _ = writeln!(s, "  [{}] {}: {}", f.scenario, f.what, f.error);
            }
        }
        s
    }
}

/// Parses an experiment selector such as `2` or `1,3`.
pub fn parse_experiments(s: &str) -> Result<Vec<u8>> {
    let mut v = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let e: u8 = part
            .parse()
            .map_err(|_| Error::invalid(format!("bad experiment `{part}`")))?;
        if !(1..=3).contains(&e) {
            return Err(Error::invalid(format!("unknown experiment {e}")));
        }
        if !v.contains(&e) {
            v.push(e);
        }
    }
    if v.is_empty() {
        return Err(Error::invalid("no experiment selected"));
    }
    Ok(v)
}
