//! Experiment orchestration: config files, seeded runs over a grid of episode
//! counts, CSV output and scaling fits.

pub mod cli;
pub mod csv_out;
pub mod generator;
pub mod scaling;
pub mod simulate;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacker::{AttackConfig, CostLedger, Strategy};
use crate::learner::LearnerConfig;
use crate::mdp::{MdpError, MdpSpec, Policy};

pub use csv_out::{emit_csv, read_csv, write_csv};
pub use generator::{generate_random_mdp, GeneratorParams};
pub use scaling::{fit_scaling, Metric, ScalingFit};
pub use simulate::{run_simulation, run_unattacked, ExperimentRecord, RecordRow, RunSetup};

pub const DEFAULT_LOG_EVERY: u64 = 128;
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Generator(#[from] generator::GeneratorError),
    #[error(transparent)]
    Simulation(#[from] simulate::SimulationError),
    #[error(transparent)]
    Csv(#[from] csv_out::CsvError),
    #[error(transparent)]
    Scaling(#[from] scaling::ScalingError),
}

pub(crate) fn read_text(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    serde_json::from_str(&read_text(path)?).map_err(|source| HarnessError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

/// Attack block of the config; the target may be omitted when the MDP comes
/// from the generator, which designates one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackBlock {
    pub strategy: Strategy,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub target_policy: Option<Policy>,
}

/// On-disk experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mdp: Option<PathBuf>,
    #[serde(default)]
    pub mdp_generator: Option<GeneratorParams>,
    #[serde(default)]
    pub learner: LearnerConfig,
    pub attack: AttackBlock,
    #[serde(rename = "T_grid")]
    pub t_grid: Vec<u64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    pub output_dir: PathBuf,
}

fn default_log_every() -> u64 {
    DEFAULT_LOG_EVERY
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.mdp.is_some() == self.mdp_generator.is_some() {
            return Err(HarnessError::Config("exactly one of `mdp` and `mdp_generator` must be given".into()));
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config("T_grid must be strictly increasing".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must be nonempty".into()));
        }
        if self.log_every == 0 {
            return Err(HarnessError::Config("log_every must be >= 1".into()));
        }
        self.learner.validate().map_err(HarnessError::Config)?;
        Ok(())
    }
}

/// A config with the MDP loaded and paths resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub setup: RunSetup,
    pub t_grid: Vec<u64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Experiment {
    /// Resolves `config`; relative paths are taken against `base_dir`.
    pub fn resolve(config: ExperimentConfig, base_dir: &Path) -> Result<Self, HarnessError> {
        config.validate()?;
        let (spec, designated) = match (&config.mdp, &config.mdp_generator) {
            (Some(path), None) => (MdpSpec::load(&base_dir.join(path))?, None),
            (None, Some(params)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                let (spec, target) = generate_random_mdp(params, &mut rng)?;
                (spec, Some(target))
            }
            _ => unreachable!("validated"),
        };
        let target = config
            .attack
            .target_policy
            .clone()
            .or(designated)
            .ok_or_else(|| HarnessError::Config("attack.target_policy is required with an MDP file".into()))?;
        target.check(&spec)?;
        let attack = AttackConfig { strategy: config.attack.strategy, epsilon: config.attack.epsilon, target_policy: target };
        Ok(Self {
            setup: RunSetup { spec, learner: config.learner, attack, log_every: config.log_every },
            t_grid: config.t_grid,
            seeds: config.seeds,
            output_dir: base_dir.join(config.output_dir),
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::resolve(config, base)
    }

    /// Runs every `(T, seed)` pair, in parallel. Results come back in grid order.
    pub fn run_all(&self) -> Result<Vec<ExperimentRecord>, HarnessError> {
        let jobs: Vec<(u64, u64)> = self
            .t_grid
            .iter()
            .flat_map(|&t| self.seeds.iter().map(move |&s| (t, s)))
            .collect();
        jobs.par_iter()
            .map(|&(t, seed)| run_simulation(&self.setup, t, seed).map_err(HarnessError::from))
            .collect()
    }

    /// Runs the grid and writes one CSV per run plus `summary.json`.
    pub fn run_and_write(&self) -> Result<Vec<RunSummary>, HarnessError> {
        std::fs::create_dir_all(&self.output_dir).map_err(|source| HarnessError::Io {
            path: self.output_dir.display().to_string(),
            source,
        })?;
        let records = self.run_all()?;
        let mut summaries = Vec::with_capacity(records.len());
        for rec in &records {
            rec.check_monotone().map_err(HarnessError::Config)?;
            emit_csv(rec, &self.output_dir.join(run_file_name(rec.episodes, rec.seed)))?;
            summaries.push(RunSummary::from(rec));
        }
        let text = serde_json::to_string_pretty(&summaries).expect("summaries serialize");
        write_text(&self.output_dir.join(SUMMARY_FILE), &text)?;
        Ok(summaries)
    }
}

pub fn run_file_name(episodes: u64, seed: u64) -> String {
    format!("run_T{episodes}_seed{seed}.csv")
}

/// Final state of one run, as stored in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub episodes: u64,
    pub seed: u64,
    pub ledger: CostLedger,
    pub final_regret: f64,
    pub wall_time_secs: f64,
}

impl From<&ExperimentRecord> for RunSummary {
    fn from(rec: &ExperimentRecord) -> Self {
        Self {
            episodes: rec.episodes,
            seed: rec.seed,
            ledger: rec.final_ledger,
            final_regret: rec.final_regret,
            wall_time_secs: rec.wall_time_secs,
        }
    }
}

pub fn load_summaries(dir: &Path) -> Result<Vec<RunSummary>, HarnessError> {
    read_json(&dir.join(SUMMARY_FILE))
}
