//! Experiment configuration, read from a sectioned TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::fqi::AgentKind;
use crate::regress::TrainConfig;
use crate::thermal::RcParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub building: RcParams,
    pub training: TrainingConfig,
    pub prices: PriceConfig,
    pub paths: PathsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub train_days: usize,
    pub test_days: usize,
    /// Growing-batch agents retrain after this many days.
    pub retrain_every: usize,
    pub epsilon_start: f64,
    /// Multiplicative nightly decay of epsilon.
    pub epsilon_decay: f64,
    /// Fixed-batch sizes in days.
    pub ladder: Vec<usize>,
    pub replicates: usize,
    /// Independent growing-batch runs in the headline comparison.
    pub growing_replicates: usize,
    pub seed: u64,
    /// Control horizon T in hours; approximators cover 2T.
    pub horizon: usize,
    pub history_depth: usize,
    /// Start from `(T_r, T_m)` at the beginning of training and of evaluation.
    pub initial_state: [f64; 2],
    pub agents: Vec<AgentKind>,
    /// Seed each slot's network with the next slot's fitted network.
    pub warm_start: bool,
    pub fqi_nn: NetConfig,
    pub physq_q: NetConfig,
    pub encoder: EncoderConfig,
    pub trees: crate::regress::TreeParams,
    /// DP grid resolution for the MPC benchmark (°C).
    pub mpc_grid: f64,
}

/// Hidden layers and optimiser settings of a Q-network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

/// Q-network schedule used by the experiments: small mini-batches with a
/// short early-stop window, which reaches the same loss with far fewer
/// passes over the data than full-batch updates.
pub fn q_train_config(learning_rate: f64) -> TrainConfig {
    TrainConfig {
        learning_rate,
        batch_size: 64,
        max_epochs: 200,
        patience: 10,
        ..TrainConfig::default()
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: vec![48, 48],
            train: q_train_config(0.01),
        }
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            train_days: 30,
            test_days: 5,
            retrain_every: 5,
            epsilon_start: 0.6,
            epsilon_decay: 0.91,
            ladder: vec![6, 12, 18, 24, 30],
            replicates: 5,
            growing_replicates: 1,
            seed: 42,
            horizon: 24,
            history_depth: 4,
            initial_state: [20.0, 20.0],
            agents: vec![AgentKind::PhysQ, AgentKind::FqiNn, AgentKind::FqiEt],
            warm_start: true,
            fqi_nn: NetConfig::default(),
            physq_q: NetConfig {
                hidden: vec![32, 32],
                train: q_train_config(0.001),
            },
            encoder: EncoderConfig::default(),
            trees: crate::regress::TreeParams::default(),
            mpc_grid: crate::mpc::DEFAULT_GRID,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Square,
    /// Day-ahead market prices from CSV, or a synthetic stand-in if no file is given.
    Belpex,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Square => "square",
            ScenarioKind::Belpex => "belpex",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(ScenarioKind::Square),
            "belpex" | "belpex-csv" => Ok(ScenarioKind::Belpex),
            other => Err(Error::invalid(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceConfig {
    pub scenarios: Vec<ScenarioKind>,
    pub seed: u64,
    pub weather_seed: u64,
    /// Optional `hour,price_eur_mwh` file for the market scenario.
    pub belpex_csv: Option<PathBuf>,
    /// Optional `hour,t_ambient_c` file replacing the generated weather.
    pub weather_csv: Option<PathBuf>,
}

impl Default for PriceConfig {
    fn default() -> Self {
        PriceConfig {
            scenarios: vec![ScenarioKind::Square, ScenarioKind::Belpex],
            seed: 7,
            weather_seed: 3,
            belpex_csv: None,
            weather_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            out_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.building.validate()?;
        let t = &self.training;
        let positive = [
            ("train_days", t.train_days),
            ("test_days", t.test_days),
            ("retrain_every", t.retrain_every),
            ("replicates", t.replicates),
            ("growing_replicates", t.growing_replicates),
            ("horizon", t.horizon),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("training.{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&t.epsilon_start) || !(0.0..=1.0).contains(&t.epsilon_decay) {
            return Err(Error::Config("epsilon settings must lie in [0, 1]".into()));
        }
        if t.ladder.is_empty() || t.ladder.iter().any(|&d| d == 0 || d > t.train_days) {
            return Err(Error::Config(format!(
                "ladder sizes must lie in [1, {}]",
                t.train_days
            )));
        }
        if t.horizon != 24 {
            return Err(Error::Config("the daily schedule needs horizon = 24".into()));
        }
        if self.prices.scenarios.is_empty() {
            return Err(Error::Config("at least one price scenario is required".into()));
        }
        Ok(())
    }

    /// Exploration rate used on day `d` (0-based).
    pub fn epsilon(&self, day: usize) -> f64 {
        self.training.epsilon_start * self.training.epsilon_decay.powi(day as i32)
    }
}
