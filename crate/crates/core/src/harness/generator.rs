//! Random benchmark MDPs with a designated target policy.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::mdp::{MdpError, MdpSpec, Policy, RewardModel};

fn default_concentration() -> f64 {
    1.0
}

fn default_model() -> RewardModel {
    RewardModel::Bernoulli
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Lower end of the target cells' mean rewards, in (0, 1).
    pub min_target_mean: f64,
    /// Symmetric Dirichlet concentration of each transition row.
    #[serde(default = "default_concentration")]
    pub dirichlet_concentration: f64,
    /// Gaussian models scale all means by `mean_bound`.
    #[serde(default = "default_model")]
    pub reward_model: RewardModel,
    /// Seed of the generator itself (independent of simulation seeds).
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.num_states == 0 || self.num_actions == 0 || self.horizon == 0 {
            return Err("num_states, num_actions and horizon must be >= 1".into());
        }
        if !(self.min_target_mean > 0.0 && self.min_target_mean < 1.0) {
            return Err(format!("min_target_mean must be in (0, 1), got {}", self.min_target_mean));
        }
        if !(self.dirichlet_concentration.is_finite() && self.dirichlet_concentration > 0.0) {
            return Err(format!(
                "dirichlet_concentration must be positive, got {}",
                self.dirichlet_concentration
            ));
        }
        if let RewardModel::Gaussian { sigma, mean_bound } = self.reward_model {
            if !(sigma > 0.0 && mean_bound > 0.0 && sigma.is_finite() && mean_bound.is_finite()) {
                return Err("gaussian sigma and mean_bound must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

fn dirichlet_row<R: Rng + ?Sized>(n: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("validated concentration");
    let mut row: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = row.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        row.iter_mut().for_each(|p| *p /= sum);
    } else {
        // every draw underflowed: fall back to a point mass
        row = vec![0.0; n];
        row[rng.random_range(0..n)] = 1.0;
    }
    row
}

/// Draws an MDP and a stationary target policy whose cells have mean reward
/// at least `min_target_mean` (times `mean_bound` for Gaussian models).
///
/// The initial state distribution is uniform.
pub fn generate_random_mdp<R: Rng + ?Sized>(
    params: &GeneratorParams,
    rng: &mut R,
) -> Result<(MdpSpec, Policy), GeneratorError> {
    params.validate().map_err(GeneratorError::Params)?;
    let (n_s, n_a, horizon) = (params.num_states, params.num_actions, params.horizon);
    let target: Vec<usize> = (0..n_s).map(|_| rng.random_range(0..n_a)).collect();
    let transitions: Vec<Vec<Vec<f64>>> = (0..n_s)
        .map(|_| {
            (0..n_a)
                .map(|_| dirichlet_row(n_s, params.dirichlet_concentration, rng))
                .collect()
        })
        .collect();
    let scale = match params.reward_model {
        RewardModel::Bernoulli => 1.0,
        RewardModel::Gaussian { mean_bound, .. } => mean_bound,
    };
    let lo = params.min_target_mean;
    let means: Vec<Vec<f64>> = (0..n_s)
        .map(|s| {
            (0..n_a)
                .map(|a| {
                    let u: f64 = rng.random();
                    let m = if a == target[s] { lo + (1.0 - lo) * u } else { 1.0 - u };
                    m * scale
                })
                .collect()
        })
        .collect();
    let spec = MdpSpec::new(
        n_s,
        n_a,
        horizon,
        transitions,
        means,
        params.reward_model,
        vec![1.0 / n_s as f64; n_s],
    )?;
    spec.ensure_valid()?;
    Ok((spec, Policy::stationary(target, horizon)))
}
