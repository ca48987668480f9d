//! Runs selected experiments and writes CSV tables plus a text summary.
//!
//! `cargo run --release --example experiment_suite -- <experiments> [out_dir] [replicates]`
//! e.g. `-- 1,3 results 5`.

use std::path::PathBuf;
use std::time::Instant;

use physq::harness::{parse_experiments, run_experiment_suite, ExperimentConfig};

fn main() -> physq::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let experiments = parse_experiments(args.get(1).map(String::as_str).unwrap_or("1"))?;
    let out_dir = PathBuf::from(args.get(2).map(String::as_str).unwrap_or("results"));
    let mut cfg = ExperimentConfig::default();
    if let Some(r) = args.get(3) {
        cfg.training.replicates = r.parse().expect("replicates must be an integer");
    }
    let t0 = Instant::now();
    let out = run_experiment_suite(&cfg, &experiments)?;
    out.write(&cfg, &out_dir)?;
    print!("{}", out.summary_text(&cfg));
    println!("finished in {:.1?}; tables in {}", t0.elapsed(), out_dir.display());
    Ok(())
}
