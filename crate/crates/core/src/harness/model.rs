//! On-disk trained agents: the batch, the frozen encoder (if any) and the
//! configuration needed to re-plan each night.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderBundle;
use crate::error::{Error, Result};
use crate::fqi::AgentKind;
use crate::mdp::{load_batch, save_batch};

use super::config::{ExperimentConfig, ScenarioKind};
use super::rollout::{fit_options, Planner};

const META: &str = "model.toml";
const BATCH: &str = "batch.txt";
const ENCODER: &str = "encoder.txt";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    agent: AgentKind,
    scenario: ScenarioKind,
    seed: u64,
    config: ExperimentConfig,
}

/// A trained agent plus the context it was trained in.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub planner: Planner,
}

impl SavedModel {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = Meta {
            agent: self.planner.kind,
            scenario: self.scenario,
            seed: self.seed,
            config: self.config.clone(),
        };
        let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
        let p = dir.join(META);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        save_batch(&self.planner.batch, dir.join(BATCH))?;
        if let Some(enc) = &self.planner.encoder {
            enc.save(dir.join(ENCODER))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let p = dir.join(META);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let meta: Meta = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        meta.config.validate()?;
        let batch = load_batch(dir.join(BATCH))?;
        let encoder = match meta.agent {
            AgentKind::PhysQ | AgentKind::PhysQWrong => Some(EncoderBundle::load(dir.join(ENCODER))?),
            _ => None,
        };
        Ok(SavedModel {
            scenario: meta.scenario,
            seed: meta.seed,
            planner: Planner {
                kind: meta.agent,
                batch,
                encoder,
                opts: fit_options(&meta.config, meta.agent, meta.seed),
            },
            config: meta.config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rollout::{run_day, Episode, QAgent};
    use crate::harness::scenario::Scenario;
    use crate::mdp::ExperienceBatch;

    #[test]
    fn roundtrip() {
        let cfg = ExperimentConfig::default();
        let sc = Scenario::build(&cfg, ScenarioKind::Square).unwrap();
        let mut agent = QAgent::new(AgentKind::FqiNn, 3);
        let mut ep = Episode::new([20.0, 20.0], 4);
        let mut batch = ExperienceBatch::new(3);
        for t in run_day(&mut agent, &sc, &cfg.building, 0, &mut ep).unwrap().transitions {
            batch.push(t).unwrap();
        }
        let m = SavedModel {
            scenario: ScenarioKind::Square,
            seed: 9,
            config: cfg.clone(),
            planner: Planner {
                kind: AgentKind::FqiNn,
                batch: batch.clone(),
                encoder: None,
                opts: fit_options(&cfg, AgentKind::FqiNn, 9),
            },
        };
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = SavedModel::load(dir.path()).unwrap();
        assert_eq!(back.planner.kind, AgentKind::FqiNn);
        assert_eq!(back.planner.batch.transitions, batch.transitions);
        assert_eq!(back.seed, 9);
        assert_eq!(back.config, cfg);
    }
}
