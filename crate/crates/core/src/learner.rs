//! Optimistic Q-learning with Hoeffding bonuses, the victim of the attacks.
//!
//! The learner only ever sees the observed (possibly contaminated) reward and
//! the next state; it never learns which action was actually executed.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{argmax_lowest, MdpError, MdpSpec, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Multiplier `c` of the confidence bonus. Zero disables exploration bonuses.
    pub bonus_scale: f64,
    /// Confidence level in (0, 1).
    pub delta: f64,
    /// Per-step reward scale used for the optimistic initialization and clipping.
    pub reward_scale: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self { bonus_scale: 0.5, delta: 0.01, reward_scale: 1.0 }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.bonus_scale.is_finite() && self.bonus_scale >= 0.0) {
            return Err(format!("bonus_scale must be >= 0, got {}", self.bonus_scale));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(format!("delta must be in (0, 1), got {}", self.delta));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(format!("reward_scale must be positive, got {}", self.reward_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Mdp(#[from] MdpError),

    #[error("invalid learner config: {0}")]
    Config(String),

    #[error("channel violated its contract at episode {episode}, step {step}: {detail}")]
    Channel {
        episode: usize,
        step: usize,
        detail: String,
    },
}

/// One interaction step as seen from outside the learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub episode: usize,
    pub step: usize,
    pub state: usize,
    pub chosen_action: usize,
    pub executed_action: usize,
    pub true_reward: f64,
    pub observed_reward: f64,
    pub next_state: usize,
}

impl StepOutcome {
    pub fn contamination(&self) -> f64 {
        self.observed_reward - self.true_reward
    }
}

#[derive(Debug, Clone)]
pub struct LearnerState {
    config: LearnerConfig,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    episode_budget: usize,
    noise_scale: f64,
    clip_values: bool,
    log_term: f64,
    q: Vec<f64>,
    counts: Vec<u64>,
}

impl LearnerState {
    /// Fresh learner for `spec`'s dimensions, planning for `episode_budget` episodes.
    ///
    /// Only the shape and the reward model of `spec` are read: bounded models
    /// clip next-step values, Gaussian models scale the bonus by sigma.
    pub fn new(spec: &MdpSpec, config: LearnerConfig, episode_budget: usize) -> Result<Self, EpisodeError> {
        config.validate().map_err(EpisodeError::Config)?;
        let (n_s, n_a, h) = (spec.num_states(), spec.num_actions(), spec.horizon());
        let model = spec.reward_model();
        let sat = (n_s * n_a * episode_budget.max(1)) as f64;
        let init = h as f64 * config.reward_scale;
        Ok(Self {
            config,
            num_states: n_s,
            num_actions: n_a,
            horizon: h,
            episode_budget,
            noise_scale: model.noise_scale(),
            clip_values: model.is_bounded(),
            log_term: (sat / config.delta).ln(),
            q: vec![init; h * n_s * n_a],
            counts: vec![0; h * n_s * n_a],
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn episode_budget(&self) -> usize {
        self.episode_budget
    }

    #[inline]
    fn idx(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    pub fn q_value(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[self.idx(h, s, a)]
    }

    pub fn visit_count(&self, h: usize, s: usize, a: usize) -> u64 {
        self.counts[self.idx(h, s, a)]
    }

    pub fn total_visits(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn set_q_value(&mut self, h: usize, s: usize, a: usize, v: f64) {
        let i = self.idx(h, s, a);
        self.q[i] = v;
    }

    fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let start = self.idx(h, s, 0);
        &self.q[start..start + self.num_actions]
    }

    /// Greedy action at `(h, s)`; ties go to the lowest index.
    pub fn select_action(&self, s: usize, h: usize) -> usize {
        argmax_lowest(self.q_row(h, s))
    }

    /// Greedy policy implied by the current estimates.
    pub fn greedy_policy(&self) -> Policy {
        Policy::new(
            (0..self.horizon)
                .map(|h| (0..self.num_states).map(|s| self.select_action(s, h)).collect())
                .collect(),
        )
    }

    /// Bonus after `t` visits: `c * scale * sqrt(H^3 log(SAT/delta) / t)`.
    pub fn bonus(&self, t: u64) -> f64 {
        let h = self.horizon as f64;
        self.config.bonus_scale * self.noise_scale * (h * h * h * self.log_term / t as f64).sqrt()
    }

    /// One Q-learning step with learning rate `(H+1)/(H+t)`.
    pub fn update(&mut self, s: usize, a: usize, h: usize, observed_reward: f64, next_state: usize) {
        let i = self.idx(h, s, a);
        self.counts[i] += 1;
        let t = self.counts[i];
        let horizon = self.horizon as f64;
        let alpha = (horizon + 1.0) / (horizon + t as f64);
        let next_value = if h + 1 < self.horizon {
            let best = self
                .q_row(h + 1, next_state)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if self.clip_values {
                let cap = (self.horizon - h - 1) as f64 * self.config.reward_scale;
                best.min(cap)
            } else {
                best
            }
        } else {
            0.0
        };
        let target = observed_reward + self.bonus(t) + next_value;
        self.q[i] = (1.0 - alpha) * self.q[i] + alpha * target;
    }
}

/// What sits between learner and environment.
pub trait Channel {
    /// Action the environment actually executes.
    fn intercept_action(&mut self, h: usize, s: usize, chosen: usize) -> usize;

    /// Reward the learner observes, given the realized true reward of the executed action.
    fn observe(&mut self, h: usize, s: usize, chosen: usize, executed: usize, true_reward: f64) -> f64;

    /// Target action at `(h, s)`, if the channel is bound by the no-tamper-on-target rule.
    fn target_action(&self, _h: usize, _s: usize) -> Option<usize> {
        None
    }
}

/// Passes everything through untouched.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityChannel;

impl Channel for IdentityChannel {
    fn intercept_action(&mut self, _h: usize, _s: usize, chosen: usize) -> usize {
        chosen
    }

    fn observe(&mut self, _h: usize, _s: usize, _chosen: usize, _executed: usize, true_reward: f64) -> f64 {
        true_reward
    }
}

/// Runs one episode of `H` steps through `channel`.
///
/// RNG draws per episode: initial state, then per step the reward followed by
/// the next state.
pub fn run_episode<C: Channel + ?Sized, R: Rng + ?Sized>(
    spec: &MdpSpec,
    learner: &mut LearnerState,
    channel: &mut C,
    rng: &mut R,
    episode: usize,
) -> Result<Vec<StepOutcome>, EpisodeError> {
    let mut out = Vec::with_capacity(spec.horizon());
    let mut s = spec.sample_initial_state(rng);
    for h in 0..spec.horizon() {
        let chosen = learner.select_action(s, h);
        let executed = channel.intercept_action(h, s, chosen);
        if executed >= spec.num_actions() {
            return Err(EpisodeError::Channel {
                episode,
                step: h,
                detail: format!("executed action {executed} out of range"),
            });
        }
        let true_reward = spec.sample_reward(s, executed, rng)?;
        let observed = channel.observe(h, s, chosen, executed, true_reward);
        if !observed.is_finite() {
            return Err(EpisodeError::Channel {
                episode,
                step: h,
                detail: format!("observed reward {observed} is not finite"),
            });
        }
        if channel.target_action(h, s) == Some(chosen) && (executed != chosen || observed != true_reward) {
            return Err(EpisodeError::Channel {
                episode,
                step: h,
                detail: "target action was tampered with".into(),
            });
        }
        let next = spec.sample_transition(s, executed, rng)?;
        learner.update(s, chosen, h, observed, next);
        out.push(StepOutcome {
            episode,
            step: h,
            state: s,
            chosen_action: chosen,
            executed_action: executed,
            true_reward,
            observed_reward: observed,
            next_state: next,
        });
        s = next;
    }
    Ok(out)
}

/// An episode with no channel at all. Returns the initial state.
pub fn run_episode_unattacked<R: Rng + ?Sized>(
    spec: &MdpSpec,
    learner: &mut LearnerState,
    rng: &mut R,
) -> Result<usize, EpisodeError> {
    let start = spec.sample_initial_state(rng);
    let mut s = start;
    for h in 0..spec.horizon() {
        let a = learner.select_action(s, h);
        let r = spec.sample_reward(s, a, rng)?;
        let next = spec.sample_transition(s, a, rng)?;
        learner.update(s, a, h, r, next);
        s = next;
    }
    Ok(start)
}
