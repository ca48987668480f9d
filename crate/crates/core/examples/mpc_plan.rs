//! Plans one day with the binary MPC at hourly and quarter-hourly resolution
//! and checks a short instance against brute-force enumeration.
//!
//! `cargo run --release --example mpc_plan`

use physq::mpc::{mpc_solve_dp, mpc_solve_exhaustive, MpcFrequency, MpcProblem, DEFAULT_GRID};
use physq::thermal::{generate_square_prices, generate_weather, RcParams};

fn main() -> physq::Result<()> {
    let params = RcParams::default();
    let prices = generate_square_prices(1, 7)?.values;
    let ambient = generate_weather(1, 3)?.values;
    for freq in [MpcFrequency::Hourly, MpcFrequency::Quarterly] {
        let pr = MpcProblem::for_day(&params, freq, &prices, &ambient, [20.0, 20.0])?;
        let sol = mpc_solve_dp(&pr, DEFAULT_GRID)?;
        let plan: String = sol.actions.iter().map(|a| if *a == 1 { '#' } else { '.' }).collect();
        println!("{:9} {:.3} EUR  {plan}", freq.name(), sol.cost);
    }
    let price_row: String = prices.iter().map(|p| if *p > 50.0 { '^' } else { '_' }).collect();
    println!("prices    {price_row}");

    let short = MpcProblem::for_day(&params, MpcFrequency::Hourly, &prices[..10], &ambient[..10], [19.0, 19.0])?;
    let dp = mpc_solve_dp(&short, DEFAULT_GRID)?;
    let ex = mpc_solve_exhaustive(&short)?;
    println!(
        "10-hour check: dp {:.4} EUR, enumeration {:.4} EUR, grid tolerance {:.4}",
        dp.cost,
        ex.cost,
        short.grid_tolerance(&params, DEFAULT_GRID)
    );
    Ok(())
}
