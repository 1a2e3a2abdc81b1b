//! Experiment runner: configuration, seeded training loops with periodic
//! greedy evaluation, learning-curve statistics and CSV output.

mod report;
mod run;

pub use report::{
    aggregate_seeds, emit, read_seed_csv, seed_csv_name, smooth, write_aggregate_csv, AggregatePoint, Manifest,
    SeedCurve, AGGREGATE_HEADER, SEED_HEADER,
};
pub use run::{
    build, evaluate, evaluate_policy, run, run_seed, train_seed, EpisodeRecord, EvalPoint,
    EvalSummary, RunRecord, TrainedRun,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{AgentConfig, AgentError, AgentKind, Exploration};
use crate::envs::{parse_env_id, EnvConfig, EnvError, EnvFamily};
use crate::learning::LearnError;
use crate::replay::ReplayError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn default_eval_every() -> u32 {
    50
}

fn default_eval_episodes() -> u32 {
    30
}

fn default_smoothing() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn is_empty_path(p: &Path) -> bool {
    p.as_os_str().is_empty()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub total_episodes: u32,
    pub seeds: Vec<u64>,
    #[serde(default = "default_eval_every")]
    pub eval_every: u32,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: u32,
    /// Window, in evaluation points, of the trailing moving average.
    #[serde(default = "default_smoothing")]
    pub smoothing_window: usize,
    /// Seeds the fixed set of evaluation episodes reused at every evaluation.
    #[serde(default)]
    pub eval_seed: u64,
    /// Where results are written; not part of the configuration hash.
    /// An empty path is left out when serializing.
    #[serde(default = "default_output_dir", skip_serializing_if = "is_empty_path")]
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    pub agent: AgentConfig,
}

impl ExperimentConfig {
    pub fn new(env: EnvConfig, agent: AgentConfig) -> Self {
        Self {
            total_episodes: 2000,
            seeds: vec![0, 1, 2],
            eval_every: default_eval_every(),
            eval_episodes: default_eval_episodes(),
            smoothing_window: default_smoothing(),
            eval_seed: 0,
            output_dir: default_output_dir(),
            env,
            agent,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|message| HarnessError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment configs always serialize")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("evaluation cadence and episode count must be positive");
        }
        if self.smoothing_window == 0 {
            return bad("smoothing window must be at least 1");
        }
        if self.total_episodes == 0 {
            return bad("total_episodes must be positive");
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        parse_env_id(&self.env.id)?;
        self.agent.validate()?;
        Ok(())
    }

    /// Upper bound on environment steps, used for schedule defaults.
    pub fn step_budget(&self) -> Result<u64, HarnessError> {
        let env = self.env.build()?;
        Ok(self.total_episodes as u64 * env.horizon() as u64)
    }

    /// Fills in defaults that depend on the environment: ε-greedy for the
    /// reachers and the flat agent, Gaussian noise otherwise, with the ε
    /// anneal spanning 10% of the step budget.
    pub fn resolved(&self) -> Result<Self, HarnessError> {
        self.validate()?;
        let mut out = self.clone();
        let family = parse_env_id(&self.env.id)?;
        let exploration = self.agent.exploration.unwrap_or(match (self.agent.kind, family) {
            (AgentKind::DuelingDdqn, _) | (_, EnvFamily::Reacher(_)) => Exploration::eps_greedy(),
            _ => Exploration::gaussian(),
        });
        out.agent.exploration = Some(exploration.resolved(self.step_budget()?));
        Ok(out)
    }

    /// SHA-256 over the canonical JSON form of the resolved configuration
    /// with the output directory blanked.
    pub fn config_hash(&self) -> Result<String, HarnessError> {
        let mut canon = self.resolved()?;
        canon.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canon).expect("experiment configs always serialize");
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::new(
            EnvConfig::new("pointmass-2"),
            AgentConfig::new(AgentKind::Bdq, 5),
        )
    }

    #[test]
    fn toml_round_trip() {
        let cfg = base().resolved().unwrap();
        let text = cfg.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "total_episodes = 100\nseeds = [1]\n[env]\nid = \"reacher3\"\n[agent]\nkind = \"bdq\"\nbins = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.eval_every, 50);
        assert_eq!(cfg.eval_episodes, 30);
        assert_eq!(cfg.smoothing_window, 20);
        assert_eq!(cfg.agent.network.shared_sizes, vec![512, 256]);
        assert_eq!(cfg.agent.schedule.batch_size, 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str(
            "total_episodes = 1\nseeds=[1]\nbogus=3\n[env]\nid=\"reacher3\"\n[agent]\nkind=\"bdq\"\nbins=3\n"
        )
        .is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = base();
        let mut b = base();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        let mut c = base();
        c.agent.learner.td.gamma = 0.98;
        assert_ne!(a.config_hash().unwrap(), c.config_hash().unwrap());
        let mut d = base();
        d.seeds.push(9);
        assert_ne!(a.config_hash().unwrap(), d.config_hash().unwrap());
    }

    #[test]
    fn explicit_default_exploration_hashes_like_implicit() {
        let a = base();
        let mut b = base();
        b.agent.exploration = Some(Exploration::gaussian());
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
    }

    #[test]
    fn reacher_defaults_to_eps_greedy() {
        let cfg = ExperimentConfig::new(EnvConfig::new("reacher3"), AgentConfig::new(AgentKind::Bdq, 9))
            .resolved()
            .unwrap();
        assert_eq!(
            cfg.agent.exploration,
            Some(Exploration::EpsGreedy {
                start: 1.0,
                end: 0.05,
                anneal_steps: Some(2000 * 200 / 10)
            })
        );
    }

    #[test]
    fn validation() {
        let mut c = base();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = base();
        c.eval_every = 0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.env.id = "walker".into();
        assert!(c.validate().is_err());
    }
}
