//! Prints the default experiment configuration as TOML, or validates a file.
//!
//! `cargo run --example config_file -- [path]`

use physq::harness::ExperimentConfig;

fn main() -> physq::Result<()> {
    match std::env::args().nth(1) {
        Some(path) => {
            let cfg = ExperimentConfig::load(&path)?;
            println!(
                "{path}: {} training days, {} test days, ladder {:?}, {} replicates",
                cfg.training.train_days, cfg.training.test_days, cfg.training.ladder, cfg.training.replicates
            );
        }
        None => print!("{}", ExperimentConfig::default().to_toml()),
    }
    Ok(())
}
