//! The man-in-the-middle attacker: action remapping, reward contamination and
//! the cost ledger.
//!
//! Every strategy obeys the no-tamper rule: when the learner already plays the
//! target action, the executed action and the observed reward pass through
//! unchanged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::Channel;
use crate::mdp::{evaluate_policy, ActionRemap, MdpError, MdpSpec, Policy, RewardModel, RewardTable, ValueTable};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Identity,
    /// Force the target action and zero the reward of every deviation.
    CombinedBounded,
    /// Confidence-bound reward poisoning without knowledge of the MDP.
    BlackBoxUnbounded,
    /// Forced target action plus reward `mu(s, target) - epsilon`.
    WhiteBoxBounded,
    /// Reward-only poisoning computed from the known MDP.
    WhiteBoxUnbounded,
}

impl Strategy {
    pub fn manipulates_actions(self) -> bool {
        matches!(self, Strategy::CombinedBounded | Strategy::WhiteBoxBounded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub strategy: Strategy,
    /// Margin parameter; ignored by `identity` and `combined_bounded`.
    #[serde(default)]
    pub epsilon: f64,
    pub target_policy: Policy,
}

/// Running reward estimates of the black-box attacker.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    num_actions: usize,
    sigma: f64,
    // 4 log(2 T H S A)
    log_factor: f64,
    mu_hat: Vec<f64>,
    ucb: Vec<f64>,
    lcb: Vec<f64>,
    counts: Vec<u64>,
}

impl EstimatorState {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        episodes: usize,
        sigma: f64,
        mean_bound: f64,
    ) -> Self {
        let n = num_states * num_actions;
        let thsa = 2.0 * episodes.max(1) as f64 * horizon as f64 * n as f64;
        Self {
            num_actions,
            sigma,
            log_factor: 4.0 * thsa.ln(),
            mu_hat: vec![0.0; n],
            ucb: vec![mean_bound; n],
            lcb: vec![-mean_bound; n],
            counts: vec![0; n],
        }
    }

    /// Confidence radius used once `count` samples have been folded in.
    pub fn radius(&self, count: u64) -> f64 {
        self.sigma * (self.log_factor / count as f64).sqrt()
    }

    /// Folds one true reward sample into the estimates.
    pub fn update(&mut self, s: usize, a: usize, reward: f64) {
        let i = s * self.num_actions + a;
        let n = self.counts[i] as f64;
        self.mu_hat[i] = (self.mu_hat[i] * n + reward) / (n + 1.0);
        let radius = self.radius(self.counts[i] + 1);
        self.ucb[i] = self.mu_hat[i] + radius;
        self.lcb[i] = self.mu_hat[i] - radius;
        self.counts[i] += 1;
    }

    pub fn mean(&self, s: usize, a: usize) -> f64 {
        self.mu_hat[s * self.num_actions + a]
    }

    pub fn ucb(&self, s: usize, a: usize) -> f64 {
        self.ucb[s * self.num_actions + a]
    }

    pub fn lcb(&self, s: usize, a: usize) -> f64 {
        self.lcb[s * self.num_actions + a]
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.num_actions + a]
    }

    /// Minimum LCB over all pairs, visited or not.
    pub fn min_lcb(&self) -> f64 {
        self.lcb.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Maximum UCB over all pairs, visited or not.
    pub fn max_ucb(&self) -> f64 {
        self.ucb.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Overwrites the confidence bounds of one pair. Used to study the attack
    /// under a known sandwich.
    pub fn set_bounds(&mut self, s: usize, a: usize, lcb: f64, ucb: f64) {
        let i = s * self.num_actions + a;
        self.lcb[i] = lcb;
        self.ucb[i] = ucb;
    }
}

/// Cumulative attack cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub action_manipulations: u64,
    pub reward_manipulations: u64,
    pub contamination_amount: f64,
    pub target_matches: u64,
    pub total_steps: u64,
}

impl CostLedger {
    pub fn record_step(&mut self, chosen: usize, executed: usize, contamination: f64, matched_target: bool) {
        self.total_steps += 1;
        if chosen != executed {
            self.action_manipulations += 1;
        }
        if contamination != 0.0 {
            self.reward_manipulations += 1;
        }
        self.contamination_amount += contamination.abs();
        if matched_target {
            self.target_matches += 1;
        }
    }

    pub fn match_fraction(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.target_matches as f64 / self.total_steps as f64
        }
    }
}

/// Expected observed reward per `(h, s, a)` plus, for action-forcing
/// strategies, where each learner action really leads.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedModel {
    pub rewards: RewardTable,
    pub remap: Option<ActionRemap>,
}

#[derive(Debug, Clone)]
struct WhiteBoxTables {
    // Q^{pi+}_h(s, pi+_h(s)) on the true MDP
    target_q: Vec<f64>,
    target_v: ValueTable,
    // precomputed contaminated reward per (h, s, a)
    rewards: RewardTable,
}

/// One attacker instance, owned by a single simulation run.
#[derive(Debug, Clone)]
pub struct Attacker {
    config: AttackConfig,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    estimator: Option<EstimatorState>,
    white_box: Option<WhiteBoxTables>,
    ledger: CostLedger,
}

impl Attacker {
    /// Builds an attacker for `spec`, which will run for `episodes` episodes.
    ///
    /// The black-box strategy only reads the shape of `spec` and the
    /// `sigma`/`mean_bound` of its Gaussian reward model. White-box strategies
    /// read everything.
    pub fn new(config: AttackConfig, spec: &MdpSpec, episodes: usize) -> Result<Self, AttackError> {
        config.target_policy.check(spec)?;
        let (n_s, n_a, horizon) = (spec.num_states(), spec.num_actions(), spec.horizon());
        let eps = config.epsilon;
        let needs_eps = matches!(
            config.strategy,
            Strategy::BlackBoxUnbounded | Strategy::WhiteBoxBounded | Strategy::WhiteBoxUnbounded
        );
        if needs_eps && !(eps.is_finite() && eps > 0.0) {
            return Err(AttackError::Config(format!(
                "{:?} requires epsilon > 0, got {eps}",
                config.strategy
            )));
        }
        let mut estimator = None;
        let mut white_box = None;
        match config.strategy {
            Strategy::Identity | Strategy::CombinedBounded => {}
            Strategy::BlackBoxUnbounded => {
                let RewardModel::Gaussian { sigma, mean_bound } = spec.reward_model() else {
                    return Err(AttackError::Config(
                        "black_box_unbounded needs a gaussian reward model (sigma, mean_bound)".into(),
                    ));
                };
                estimator = Some(EstimatorState::new(n_s, n_a, horizon, episodes, sigma, mean_bound));
            }
            Strategy::WhiteBoxBounded => {
                if !spec.reward_model().is_bounded() {
                    return Err(AttackError::Config("white_box_bounded needs bounded rewards".into()));
                }
                let min_target = min_target_mean(spec, &config.target_policy);
                if eps > min_target {
                    return Err(AttackError::Config(format!(
                        "white_box_bounded requires epsilon <= min target mean {min_target}, got {eps}"
                    )));
                }
                white_box = Some(white_box_tables(spec, &config.target_policy, eps, true)?);
            }
            Strategy::WhiteBoxUnbounded => {
                white_box = Some(white_box_tables(spec, &config.target_policy, eps, false)?);
            }
        }
        Ok(Self {
            config,
            num_states: n_s,
            num_actions: n_a,
            horizon,
            estimator,
            white_box,
            ledger: CostLedger::default(),
        })
    }

    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn estimator(&self) -> Option<&EstimatorState> {
        self.estimator.as_ref()
    }

    pub fn estimator_mut(&mut self) -> Option<&mut EstimatorState> {
        self.estimator.as_mut()
    }

    #[inline]
    pub fn target(&self, h: usize, s: usize) -> usize {
        self.config.target_policy.action(h, s)
    }

    /// Executed action for learner action `a` at `(h, s)`.
    pub fn intercept_action(&self, s: usize, a: usize, h: usize) -> usize {
        let target = self.target(h, s);
        if a != target && self.config.strategy.manipulates_actions() {
            target
        } else {
            a
        }
    }

    /// Observed reward for learner action `a` given the executed action's true
    /// reward. The black-box estimator must already contain this step's sample.
    pub fn contaminate_reward(&self, s: usize, a: usize, _executed: usize, true_reward: f64, h: usize) -> f64 {
        let target = self.target(h, s);
        if a == target {
            return true_reward;
        }
        match self.config.strategy {
            Strategy::Identity => true_reward,
            Strategy::CombinedBounded => 0.0,
            Strategy::BlackBoxUnbounded => {
                let est = self.estimator.as_ref().expect("black-box attacker has an estimator");
                self.black_box_reward(est, s, h)
            }
            Strategy::WhiteBoxBounded | Strategy::WhiteBoxUnbounded => {
                let wb = self.white_box.as_ref().expect("white-box attacker has tables");
                wb.rewards.get(h, s, a)
            }
        }
    }

    fn black_box_reward(&self, est: &EstimatorState, s: usize, h: usize) -> f64 {
        let remaining = (self.horizon - 1 - h) as f64;
        est.lcb(s, self.target(h, s)) - self.config.epsilon + remaining * est.min_lcb()
            - remaining * est.max_ucb()
    }

    /// `Q^{pi+}_h(s, pi+_h(s))` on the true MDP, white-box strategies only.
    pub fn target_q(&self, h: usize, s: usize) -> Option<f64> {
        self.white_box.as_ref().map(|wb| wb.target_q[h * self.num_states + s])
    }

    /// `V^{pi+}` on the true MDP, white-box strategies only.
    pub fn target_values(&self) -> Option<&ValueTable> {
        self.white_box.as_ref().map(|wb| &wb.target_v)
    }

    /// Expected observed reward (and action remap) the learner effectively faces.
    ///
    /// Target cells carry the true mean of `spec`; the black-box map uses the
    /// estimator's current bounds.
    pub fn attacked_reward_map(&self, spec: &MdpSpec) -> Result<InducedModel, AttackError> {
        if self.config.strategy == Strategy::Identity {
            return Err(AttackError::Config("identity channel has no attacked reward map".into()));
        }
        let (horizon, n_s, n_a) = (self.horizon, self.num_states, self.num_actions);
        if (spec.horizon(), spec.num_states(), spec.num_actions()) != (horizon, n_s, n_a) {
            return Err(AttackError::Mdp(MdpError::DimensionMismatch(
                "attacker and MDP shapes differ".into(),
            )));
        }
        let rewards = RewardTable::from_fn(horizon, n_s, n_a, |h, s, a| {
            let target = self.target(h, s);
            if a == target {
                return spec.mean_reward(s, a);
            }
            match self.config.strategy {
                Strategy::Identity => unreachable!(),
                Strategy::CombinedBounded => 0.0,
                Strategy::BlackBoxUnbounded => self.black_box_reward(self.estimator.as_ref().unwrap(), s, h),
                Strategy::WhiteBoxBounded | Strategy::WhiteBoxUnbounded => {
                    self.white_box.as_ref().unwrap().rewards.get(h, s, a)
                }
            }
        });
        let remap = self
            .config
            .strategy
            .manipulates_actions()
            .then(|| ActionRemap::from_fn(horizon, n_s, n_a, |h, s, a| self.intercept_action(s, a, h)));
        Ok(InducedModel { rewards, remap })
    }
}

impl Channel for Attacker {
    fn intercept_action(&mut self, h: usize, s: usize, chosen: usize) -> usize {
        Attacker::intercept_action(self, s, chosen, h)
    }

    fn observe(&mut self, h: usize, s: usize, chosen: usize, executed: usize, true_reward: f64) -> f64 {
        if let Some(est) = self.estimator.as_mut() {
            est.update(s, executed, true_reward);
        }
        let observed = self.contaminate_reward(s, chosen, executed, true_reward, h);
        let contamination = observed - true_reward;
        let matched = chosen == self.target(h, s);
        self.ledger.record_step(chosen, executed, contamination, matched);
        observed
    }

    fn target_action(&self, h: usize, s: usize) -> Option<usize> {
        Some(self.target(h, s))
    }
}

/// `min_{h,s} mu(s, pi+_h(s))`.
pub fn min_target_mean(spec: &MdpSpec, target: &Policy) -> f64 {
    let mut m = f64::INFINITY;
    for h in 0..spec.horizon() {
        for s in 0..spec.num_states() {
            m = m.min(spec.mean_reward(s, target.action(h, s)));
        }
    }
    m
}

// Target rows are never contaminated, so the attacked values of the target
// policy coincide with its true values and one evaluation suffices.
fn white_box_tables(spec: &MdpSpec, target: &Policy, eps: f64, bounded: bool) -> Result<WhiteBoxTables, AttackError> {
    let means = RewardTable::from_means(spec);
    let (v, q) = evaluate_policy(spec, &means, target)?;
    let (horizon, n_s, n_a) = (spec.horizon(), spec.num_states(), spec.num_actions());
    let mut target_q = vec![0.0; horizon * n_s];
    for h in 0..horizon {
        for s in 0..n_s {
            target_q[h * n_s + s] = q.get(h, s, target.action(h, s));
        }
    }
    let rewards = RewardTable::from_fn(horizon, n_s, n_a, |h, s, a| {
        let tgt = target.action(h, s);
        if a == tgt {
            return spec.mean_reward(s, a);
        }
        // bounded: the action is forced to the target, so the continuation follows the target row
        let row_action = if bounded { tgt } else { a };
        target_q[h * n_s + s] - spec.expect(s, row_action, v.row(h + 1)) - eps
    });
    Ok(WhiteBoxTables { target_q, target_v: v, rewards })
}
