//! Two-state RC building simulator with a minute-resolution backup
//! controller, and the exogenous price and weather series that drive it.

mod series;
mod sim;

pub use series::{
    generate_belpex_like_prices, generate_square_prices, generate_weather, load_price_csv,
    load_weather_csv, write_price_csv, write_weather_csv, PriceSeries, SquareWaveShape,
    WeatherSeries, HOURS_PER_DAY,
};
pub use sim::{
    backup_override, env_step_hour, rc_substep, step_hour_with, HourOutcome, LinearThermalModel,
    RcParams, SimState, COMFORT_MAX, COMFORT_MIN, MINUTES_PER_HOUR,
};
