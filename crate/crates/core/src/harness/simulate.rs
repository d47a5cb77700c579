//! Seeded attack simulations and their per-episode records.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacker::{AttackConfig, AttackError, Attacker, CostLedger};
use crate::learner::{run_episode, run_episode_unattacked, EpisodeError, LearnerConfig, LearnerState};
use crate::mdp::{evaluate_policy, optimal_values, MdpError, MdpSpec, Policy, RewardTable, ValueTable};

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Cumulative quantities after `episode` episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub episode: u64,
    pub contamination_amount: f64,
    pub reward_manipulations: u64,
    pub action_manipulations: u64,
    pub target_matches: u64,
    pub total_steps: u64,
    pub true_regret: f64,
}

impl RecordRow {
    fn snapshot(episode: u64, ledger: &CostLedger, regret: f64) -> Self {
        Self {
            episode,
            contamination_amount: ledger.contamination_amount,
            reward_manipulations: ledger.reward_manipulations,
            action_manipulations: ledger.action_manipulations,
            target_matches: ledger.target_matches,
            total_steps: ledger.total_steps,
            true_regret: regret,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub episodes: u64,
    pub horizon: u64,
    pub rows: Vec<RecordRow>,
    pub final_ledger: CostLedger,
    pub final_regret: f64,
    pub wall_time_secs: f64,
}

impl ExperimentRecord {
    /// Checks that every cumulative column is nondecreasing and that matches
    /// never exceed `episode * H` steps.
    pub fn check_monotone(&self) -> Result<(), String> {
        let mut prev: Option<&RecordRow> = None;
        for row in &self.rows {
            if row.total_steps != row.episode * self.horizon {
                return Err(format!("episode {}: total_steps {} != t*H", row.episode, row.total_steps));
            }
            if row.target_matches > row.total_steps {
                return Err(format!("episode {}: target_matches exceeds total_steps", row.episode));
            }
            if let Some(p) = prev {
                let ok = row.episode > p.episode
                    && row.contamination_amount >= p.contamination_amount
                    && row.reward_manipulations >= p.reward_manipulations
                    && row.action_manipulations >= p.action_manipulations
                    && row.target_matches >= p.target_matches
                    && row.true_regret >= p.true_regret - 1e-9;
                if !ok {
                    return Err(format!("episode {}: cumulative column decreased", row.episode));
                }
            }
            prev = Some(row);
        }
        Ok(())
    }
}

/// Everything a run needs besides `T` and the seed.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub spec: MdpSpec,
    pub learner: LearnerConfig,
    pub attack: AttackConfig,
    pub log_every: u64,
}

// Caches V^pi for the learner's greedy policy, which changes rarely once the
// learner settles.
struct RegretTracker {
    rewards: RewardTable,
    v_star: ValueTable,
    cached: Option<(Policy, ValueTable)>,
    total: f64,
}

impl RegretTracker {
    fn new(spec: &MdpSpec) -> Result<Self, MdpError> {
        let rewards = RewardTable::from_means(spec);
        let (v_star, _, _) = optimal_values(spec, &rewards)?;
        Ok(Self { rewards, v_star, cached: None, total: 0.0 })
    }

    fn add(&mut self, spec: &MdpSpec, policy: Policy, start: usize) -> Result<(), MdpError> {
        let stale = self.cached.as_ref().is_none_or(|(p, _)| *p != policy);
        if stale {
            let (v, _) = evaluate_policy(spec, &self.rewards, &policy)?;
            self.cached = Some((policy, v));
        }
        let v = &self.cached.as_ref().unwrap().1;
        self.total += self.v_star.get(0, start) - v.get(0, start);
        Ok(())
    }
}

/// Runs `episodes` episodes of the configured learner through the configured
/// attacker with a fresh `ChaCha8Rng` seeded by `seed`.
pub fn run_simulation(setup: &RunSetup, episodes: u64, seed: u64) -> Result<ExperimentRecord, SimulationError> {
    let clock = Instant::now();
    let spec = &setup.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = LearnerState::new(spec, setup.learner, episodes as usize)?;
    let mut attacker = Attacker::new(setup.attack.clone(), spec, episodes as usize)?;
    let mut regret = RegretTracker::new(spec)?;
    let stride = setup.log_every.max(1);
    let mut rows = Vec::with_capacity((episodes / stride) as usize);
    for t in 0..episodes {
        let policy = learner.greedy_policy();
        let steps = run_episode(spec, &mut learner, &mut attacker, &mut rng, t as usize)?;
        regret.add(spec, policy, steps[0].state)?;
        let done = t + 1;
        if done % stride == 0 {
            rows.push(RecordRow::snapshot(done, attacker.ledger(), regret.total));
        }
    }
    Ok(ExperimentRecord {
        seed,
        episodes,
        horizon: spec.horizon() as u64,
        rows,
        final_ledger: *attacker.ledger(),
        final_regret: regret.total,
        wall_time_secs: clock.elapsed().as_secs_f64(),
    })
}

/// The learner alone, without any channel. Only `total_steps` of the ledger
/// moves.
pub fn run_unattacked(
    spec: &MdpSpec,
    learner_config: LearnerConfig,
    episodes: u64,
    seed: u64,
    log_every: u64,
) -> Result<ExperimentRecord, SimulationError> {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = LearnerState::new(spec, learner_config, episodes as usize)?;
    let mut regret = RegretTracker::new(spec)?;
    let mut ledger = CostLedger::default();
    let stride = log_every.max(1);
    let mut rows = Vec::new();
    for t in 0..episodes {
        let policy = learner.greedy_policy();
        let start = run_episode_unattacked(spec, &mut learner, &mut rng)?;
        regret.add(spec, policy, start)?;
        ledger.total_steps += spec.horizon() as u64;
        if (t + 1) % stride == 0 {
            rows.push(RecordRow::snapshot(t + 1, &ledger, regret.total));
        }
    }
    Ok(ExperimentRecord {
        seed,
        episodes,
        horizon: spec.horizon() as u64,
        rows,
        final_ledger: ledger,
        final_regret: regret.total,
        wall_time_secs: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacker::Strategy;
    use crate::feasibility::build_counterexample;

    fn setup(strategy: Strategy) -> RunSetup {
        let (spec, target, _) = build_counterexample();
        RunSetup {
            spec,
            learner: LearnerConfig::default(),
            attack: AttackConfig { strategy, epsilon: 0.1, target_policy: target },
            log_every: 10,
        }
    }

    #[test]
    fn zero_episodes_is_empty() {
        let rec = run_simulation(&setup(Strategy::CombinedBounded), 0, 1).unwrap();
        assert!(rec.rows.is_empty());
        assert_eq!(rec.final_ledger, CostLedger::default());
        assert_eq!(rec.final_regret, 0.0);
    }

    #[test]
    fn identity_costs_nothing_and_matches_unattacked_regret() {
        let s = setup(Strategy::Identity);
        let rec = run_simulation(&s, 500, 3).unwrap();
        assert!(rec.rows.iter().all(|r| r.contamination_amount == 0.0
            && r.reward_manipulations == 0
            && r.action_manipulations == 0));
        let clean = run_unattacked(&s.spec, s.learner, 500, 3, 10).unwrap();
        assert_eq!(rec.final_regret.to_bits(), clean.final_regret.to_bits());
        for (a, b) in rec.rows.iter().zip(&clean.rows) {
            assert_eq!(a.true_regret.to_bits(), b.true_regret.to_bits());
        }
    }

    #[test]
    fn rows_follow_stride_and_are_monotone() {
        let rec = run_simulation(&setup(Strategy::CombinedBounded), 95, 0).unwrap();
        let eps: Vec<u64> = rec.rows.iter().map(|r| r.episode).collect();
        assert_eq!(eps, (1..=9).map(|k| k * 10).collect::<Vec<_>>());
        rec.check_monotone().unwrap();
    }

    #[test]
    fn same_seed_same_record() {
        let s = setup(Strategy::CombinedBounded);
        let a = run_simulation(&s, 200, 42).unwrap();
        let b = run_simulation(&s, 200, 42).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.final_ledger, b.final_ledger);
    }
}
