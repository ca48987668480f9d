use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const HOURS_PER_DAY: usize = 24;

/// Hourly electricity prices (€/MWh).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub values: Vec<f64>,
    pub start_day: usize,
}

impl PriceSeries {
    pub fn new(values: Vec<f64>, start_day: usize) -> Result<Self> {
        check_daily("price series", &values)?;
        Ok(PriceSeries { values, start_day })
    }

    pub fn days(&self) -> usize {
        self.values.len() / HOURS_PER_DAY
    }

    pub fn day(&self, d: usize) -> &[f64] {
        &self.values[d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY]
    }
}

/// Hourly outside air temperatures (°C).
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub values: Vec<f64>,
}

impl WeatherSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_daily("weather series", &values)?;
        if let Some(v) = values.iter().find(|v| !(-20.0..=45.0).contains(*v)) {
            return Err(Error::invalid(format!(
                "outside temperature {v} outside [-20, 45] °C"
            )));
        }
        Ok(WeatherSeries { values })
    }

    pub fn days(&self) -> usize {
        self.values.len() / HOURS_PER_DAY
    }

    pub fn day(&self, d: usize) -> &[f64] {
        &self.values[d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY]
    }
}

fn check_daily(what: &'static str, values: &[f64]) -> Result<()> {
    if values.len() % HOURS_PER_DAY != 0 {
        return Err(Error::Shape {
            expected: (values.len() / HOURS_PER_DAY + 1) * HOURS_PER_DAY,
            got: values.len(),
            context: what,
        });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what, value: *v });
    }
    Ok(())
}

/// Daily two-level price pattern with a randomly placed peak block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareWaveShape {
    pub low: f64,
    pub high: f64,
    pub peak_hours: usize,
    /// Earliest and latest hour at which the peak may start.
    pub onset_range: (usize, usize),
}

impl Default for SquareWaveShape {
    fn default() -> Self {
        SquareWaveShape {
            low: 30.0,
            high: 120.0,
            peak_hours: 8,
            onset_range: (5, 15),
        }
    }
}

impl SquareWaveShape {
    pub fn day_profile(&self, onset: usize) -> Vec<f64> {
        (0..HOURS_PER_DAY)
            .map(|h| {
                if h >= onset && h < onset + self.peak_hours {
                    self.high
                } else {
                    self.low
                }
            })
            .collect()
    }
}

/// Square-wave prices with the default shape; the peak onset is drawn per day.
pub fn generate_square_prices(days: usize, seed: u64) -> Result<PriceSeries> {
    generate_square_prices_with(days, seed, &SquareWaveShape::default())
}

pub fn generate_square_prices_with(
    days: usize,
    seed: u64,
    shape: &SquareWaveShape,
) -> Result<PriceSeries> {
    if days == 0 {
        return Err(Error::invalid("days must be >= 1"));
    }
    let (lo, hi) = shape.onset_range;
    if lo > hi || hi + shape.peak_hours > HOURS_PER_DAY {
        return Err(Error::invalid("square-wave peak does not fit in a day"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(days * HOURS_PER_DAY);
    for _ in 0..days {
        let onset = rng.gen_range(lo..=hi);
        values.extend(shape.day_profile(onset));
    }
    PriceSeries::new(values, 0)
}

/// Synthetic stand-in for historical day-ahead prices: a night trough, a
/// morning and an evening peak, a random daily level and hourly noise.
pub fn generate_belpex_like_prices(days: usize, seed: u64) -> Result<PriceSeries> {
    if days == 0 {
        return Err(Error::invalid("days must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBE1_9E5);
    let level = Normal::<f64>::new(1.0, 0.15).expect("valid normal");
    let noise = Normal::<f64>::new(0.0, 6.0).expect("valid normal");
    let shift = Normal::<f64>::new(0.0, 1.0).expect("valid normal");
    let mut values = Vec::with_capacity(days * HOURS_PER_DAY);
    for _ in 0..days {
        let scale = level.sample(&mut rng).clamp(0.6, 1.5);
        let morning = 8.0 + shift.sample(&mut rng).clamp(-2.0, 2.0);
        let evening = 19.0 + shift.sample(&mut rng).clamp(-2.0, 2.0);
        for h in 0..HOURS_PER_DAY {
            let t = h as f64;
            let shape = 55.0 + 35.0 * (-((t - morning) / 2.0).powi(2)).exp()
                + 50.0 * (-((t - evening) / 2.5).powi(2)).exp()
                - 15.0 * (-((t - 3.5) / 2.5).powi(2)).exp();
            let p = scale * shape + noise.sample(&mut rng);
            values.push(p.max(5.0));
        }
    }
    PriceSeries::new(values, 0)
}

/// Daily sinusoid (mean 5 °C, amplitude 5 °C, warmest at 15:00) plus seeded
/// hourly Gaussian noise with σ = 1 °C.
pub fn generate_weather(days: usize, seed: u64) -> Result<WeatherSeries> {
    if days == 0 {
        return Err(Error::invalid("days must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EA7_4E12);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let values = (0..days * HOURS_PER_DAY)
        .map(|i| {
            let h = (i % HOURS_PER_DAY) as f64;
            let base = 5.0 + 5.0 * (2.0 * std::f64::consts::PI * (h - 9.0) / 24.0).sin();
            (base + noise.sample(&mut rng)).clamp(-20.0, 45.0)
        })
        .collect();
    WeatherSeries::new(values)
}

pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let values = load_hourly_csv(path.as_ref(), "price_eur_mwh")?;
    PriceSeries::new(values, 0)
}

pub fn load_weather_csv(path: impl AsRef<Path>) -> Result<WeatherSeries> {
    let values = load_hourly_csv(path.as_ref(), "t_ambient_c")?;
    WeatherSeries::new(values)
}

fn load_hourly_csv(path: &Path, column: &str) -> Result<Vec<f64>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "hour" || &headers[1] != column {
        return Err(parse_err(
            1,
            format!("expected header `hour,{column}`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let hour: usize = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad hour `{}`", &record[0])))?;
        if hour != values.len() {
            return Err(parse_err(
                line,
                format!("expected hour {}, found {hour}", values.len()),
            ));
        }
        let v: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad {column} `{}`", &record[1])))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite {column}")));
        }
        values.push(v);
    }
    Ok(values)
}

pub fn write_price_csv(path: impl AsRef<Path>, series: &PriceSeries) -> Result<()> {
    write_hourly_csv(path.as_ref(), "price_eur_mwh", &series.values)
}

pub fn write_weather_csv(path: impl AsRef<Path>, series: &WeatherSeries) -> Result<()> {
    write_hourly_csv(path.as_ref(), "t_ambient_c", &series.values)
}

fn write_hourly_csv(path: &Path, column: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["hour", column])?;
    for (h, v) in values.iter().enumerate() {
        w.write_record([h.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
