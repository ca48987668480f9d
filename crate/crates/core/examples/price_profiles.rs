//! Generates both price scenarios and the weather, writes them as CSV and
//! reads them back.
//!
//! `cargo run --example price_profiles -- [out_dir]`

use std::path::PathBuf;

use physq::thermal::{
    generate_belpex_like_prices, generate_square_prices, generate_weather, load_price_csv, load_weather_csv,
    write_price_csv, write_weather_csv, HOURS_PER_DAY,
};

fn main() -> physq::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().display().to_string()));
    let days = 3;
    let square = generate_square_prices(days, 7)?;
    let market = generate_belpex_like_prices(days, 7)?;
    let weather = generate_weather(days, 3)?;
    for h in 0..days * HOURS_PER_DAY {
        println!(
            "day {} hour {:2}  square {:6.1}  market {:6.1}  ambient {:5.1}",
            h / HOURS_PER_DAY,
            h % HOURS_PER_DAY,
            square.values[h],
            market.values[h],
            weather.values[h]
        );
    }
    let prices = dir.join("prices.csv");
    let ambient = dir.join("weather.csv");
    write_price_csv(&prices, &market)?;
    write_weather_csv(&ambient, &weather)?;
    assert_eq!(load_price_csv(&prices)?.values, market.values);
    assert_eq!(load_weather_csv(&ambient)?.values, weather.values);
    println!("wrote {} and {}", prices.display(), ambient.display());
    Ok(())
}
