//! Price and weather profiles split into training days and held-out test days.

use crate::error::{Error, Result};
use crate::mdp::ForecastBundle;
use crate::thermal::{
    generate_belpex_like_prices, generate_square_prices, generate_weather, load_price_csv,
    load_weather_csv, PriceSeries, WeatherSeries, HOURS_PER_DAY,
};

use super::config::{ExperimentConfig, ScenarioKind};

/// Exogenous inputs of one experiment.
///
/// Days `0..=train_days` are training profiles (the last one only serves as
/// lookahead for the final night). The following `test_days + 1` days form a
/// contiguous held-out block, again with one trailing lookahead day.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub prices: PriceSeries,
    pub weather: WeatherSeries,
    pub train_days: usize,
    pub test_days: usize,
}

impl Scenario {
    pub fn total_days(train_days: usize, test_days: usize) -> usize {
        train_days + 1 + test_days + 1
    }

    pub fn build(cfg: &ExperimentConfig, kind: ScenarioKind) -> Result<Self> {
        let t = &cfg.training;
        let days = Self::total_days(t.train_days, t.test_days);
        let prices = match kind {
            ScenarioKind::Square => generate_square_prices(days, cfg.prices.seed)?,
            ScenarioKind::Belpex => match &cfg.prices.belpex_csv {
                Some(p) => load_price_csv(p)?,
                None => generate_belpex_like_prices(days, cfg.prices.seed)?,
            },
        };
        let weather = match &cfg.prices.weather_csv {
            Some(p) => load_weather_csv(p)?,
            None => generate_weather(days, cfg.prices.weather_seed)?,
        };
        Self::from_series(kind, prices, weather, t.train_days, t.test_days)
    }

    pub fn from_series(
        kind: ScenarioKind,
        prices: PriceSeries,
        weather: WeatherSeries,
        train_days: usize,
        test_days: usize,
    ) -> Result<Self> {
        let need = Self::total_days(train_days, test_days);
        if prices.days() < need || weather.days() < need {
            return Err(Error::Shape {
                expected: need * HOURS_PER_DAY,
                got: prices.values.len().min(weather.values.len()),
                context: "scenario series length",
            });
        }
        Ok(Scenario {
            kind,
            prices,
            weather,
            train_days,
            test_days,
        })
    }

    /// Absolute day index of training day `d`.
    pub fn train_day(&self, d: usize) -> usize {
        d
    }

    /// Absolute day index of test day `j`.
    pub fn test_day(&self, j: usize) -> usize {
        self.train_days + 1 + j
    }

    pub fn price(&self, day: usize, hour: usize) -> f64 {
        self.prices.values[day * HOURS_PER_DAY + hour]
    }

    pub fn ambient(&self, day: usize, hour: usize) -> f64 {
        self.weather.values[day * HOURS_PER_DAY + hour]
    }

    /// Exact two-day forecast starting at the beginning of `day`.
    pub fn forecast(&self, day: usize) -> Result<ForecastBundle> {
        let a = day * HOURS_PER_DAY;
        let b = a + 2 * HOURS_PER_DAY;
        if b > self.prices.values.len() || b > self.weather.values.len() {
            return Err(Error::invalid(format!("no two-day forecast available from day {day}")));
        }
        ForecastBundle::new(
            self.prices.values[a..b].to_vec(),
            self.weather.values[a..b].to_vec(),
        )
    }

    /// Forecast for a training-time night. Fails if the two-day window would
    /// reach past the training span into held-out profiles.
    pub fn training_forecast(&self, day: usize) -> Result<ForecastBundle> {
        if day + 2 > self.training_span().end {
            return Err(Error::invalid(format!(
                "training forecast from day {day} would read held-out profiles"
            )));
        }
        self.forecast(day)
    }

    /// Value-level held-out check: no ambient temperature stored in `batch`
    /// may coincide with a held-out hour's value.
    pub fn audit_batch(&self, batch: &crate::mdp::ExperienceBatch) -> Result<()> {
        let held: std::collections::HashSet<u64> = self
            .test_span()
            .flat_map(|d| self.weather.day(d).iter().map(|v| v.to_bits()))
            .collect();
        for (i, t) in batch.transitions.iter().enumerate() {
            for v in [t.obs.t_ambient, t.next_obs.t_ambient] {
                if held.contains(&v.to_bits()) {
                    return Err(Error::invalid(format!(
                        "transition {i} carries held-out ambient value {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Absolute day indices whose profiles training may see.
    pub fn training_span(&self) -> std::ops::Range<usize> {
        0..self.train_days + 1
    }

    /// Absolute day indices reserved for evaluation.
    pub fn test_span(&self) -> std::ops::Range<usize> {
        self.test_day(0)..self.test_day(self.test_days) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_are_disjoint() {
        let s = Scenario::build(&ExperimentConfig::default(), ScenarioKind::Square).unwrap();
        let tr = s.training_span();
        let te = s.test_span();
        assert!(tr.end <= te.start);
        assert_eq!(te.len(), 6);
        assert_eq!(s.forecast(s.test_day(4)).unwrap().horizon(), 48);
        assert!(s.training_forecast(s.train_days - 1).is_ok());
        assert!(s.training_forecast(s.train_days).is_err());
    }
}
