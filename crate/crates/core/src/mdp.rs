//! Finite tabular episodic MDPs: representation, validation, sampling and
//! exact backward-induction evaluation.
//!
//! Steps are 0-based throughout the crate: `h` ranges over `0..horizon` and
//! the terminal value row lives at index `horizon`. A step `h` therefore has
//! `horizon - 1 - h` steps remaining after it.
//!
//! Rewards passed to the evaluators are step-indexed ([`RewardTable`]) even
//! though the MDP itself is stationary, so attacked reward maps that vary
//! with the step can be evaluated against the same [`MdpSpec`].

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for probability-row sums.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("invalid MDP: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, MdpError>;

/// Reward noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RewardModel {
    /// Rewards in {0, 1} with mean in (0, 1].
    Bernoulli,
    /// Rewards ~ N(mu, sigma^2) with |mu| <= mean_bound.
    Gaussian { sigma: f64, mean_bound: f64 },
}

impl RewardModel {
    pub fn is_bounded(&self) -> bool {
        matches!(self, RewardModel::Bernoulli)
    }

    /// Scale of the reward noise (1 for bounded rewards, sigma otherwise).
    pub fn noise_scale(&self) -> f64 {
        match *self {
            RewardModel::Bernoulli => 1.0,
            RewardModel::Gaussian { sigma, .. } => sigma,
        }
    }
}

/// A single invariant violation found by [`MdpSpec::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    NonFinite { field: &'static str, index: Vec<usize> },
    MeanOutOfRange { state: usize, action: usize, mean: f64, lo: f64, hi: f64 },
    BadNoiseParameter { name: &'static str, value: f64 },
    InitialNegative { state: usize, value: f64 },
    InitialSum { sum: f64 },
    EmptyDimension { name: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeProbability { state, action, next, value } => write!(
                f,
                "transition (s={state}, a={action}) -> {next} has negative probability {value}"
            ),
            Violation::RowSum { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            Violation::NonFinite { field, index } => write!(f, "{field}{index:?} is not finite"),
            Violation::MeanOutOfRange { state, action, mean, lo, hi } => write!(
                f,
                "mean reward (s={state}, a={action}) = {mean} outside allowed range [{lo}, {hi}]"
            ),
            Violation::BadNoiseParameter { name, value } => {
                write!(f, "reward model parameter {name} = {value} must be positive and finite")
            }
            Violation::InitialNegative { state, value } => {
                write!(f, "initial probability of state {state} is negative ({value})")
            }
            Violation::InitialSum { sum } => write!(f, "initial state distribution sums to {sum}"),
            Violation::EmptyDimension { name } => write!(f, "{name} must be positive"),
        }
    }
}

/// A complete stationary tabular episodic MDP.
///
/// Construction only checks shapes; use [`MdpSpec::validate`] to check the
/// probabilistic invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    // (s, a, s') row-major
    transitions: Vec<f64>,
    // (s, a)
    mean_rewards: Vec<f64>,
    reward_model: RewardModel,
    initial: Vec<f64>,
}

/// On-disk JSON layout of an MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub mean_rewards: Vec<Vec<f64>>,
    pub reward_model: RewardModel,
    pub initial_state_distribution: Vec<f64>,
}

impl MdpSpec {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transitions: Vec<Vec<Vec<f64>>>,
        mean_rewards: Vec<Vec<f64>>,
        reward_model: RewardModel,
        initial_state_distribution: Vec<f64>,
    ) -> Result<Self> {
        let (s_n, a_n) = (num_states, num_actions);
        if transitions.len() != s_n {
            return Err(MdpError::DimensionMismatch(format!(
                "transitions has {} states, expected {s_n}",
                transitions.len()
            )));
        }
        let mut flat = Vec::with_capacity(s_n * a_n * s_n);
        for (s, per_action) in transitions.iter().enumerate() {
            if per_action.len() != a_n {
                return Err(MdpError::DimensionMismatch(format!(
                    "transitions[{s}] has {} actions, expected {a_n}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != s_n {
                    return Err(MdpError::DimensionMismatch(format!(
                        "transitions[{s}][{a}] has length {}, expected {s_n}",
                        row.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        if mean_rewards.len() != s_n || mean_rewards.iter().any(|r| r.len() != a_n) {
            return Err(MdpError::DimensionMismatch(format!(
                "mean_rewards must be {s_n}x{a_n}"
            )));
        }
        if initial_state_distribution.len() != s_n {
            return Err(MdpError::DimensionMismatch(format!(
                "initial_state_distribution has length {}, expected {s_n}",
                initial_state_distribution.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transitions: flat,
            mean_rewards: mean_rewards.into_iter().flatten().collect(),
            reward_model,
            initial: initial_state_distribution,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn reward_model(&self) -> RewardModel {
        self.reward_model
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    /// P(.|s, a).
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.num_states;
        let start = (s * self.num_actions + a) * n;
        &self.transitions[start..start + n]
    }

    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        self.mean_rewards[s * self.num_actions + a]
    }

    pub fn set_mean_reward(&mut self, s: usize, a: usize, value: f64) {
        self.mean_rewards[s * self.num_actions + a] = value;
    }

    /// Expectation of `values` under P(.|s, a).
    pub fn expect(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        self.transition_row(s, a)
            .iter()
            .zip(values)
            .map(|(p, v)| p * v)
            .sum()
    }

    pub fn check_state(&self, s: usize) -> Result<()> {
        check_index("state", s, self.num_states)
    }

    pub fn check_action(&self, a: usize) -> Result<()> {
        check_index("action", a, self.num_actions)
    }

    pub fn check_step(&self, h: usize) -> Result<()> {
        check_index("step", h, self.horizon)
    }

    /// Returns every invariant violation; an empty list means the MDP is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, n) in [
            ("num_states", self.num_states),
            ("num_actions", self.num_actions),
            ("horizon", self.horizon),
        ] {
            if n == 0 {
                out.push(Violation::EmptyDimension { name });
            }
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.transition_row(s, a);
                let mut finite = true;
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() {
                        finite = false;
                        out.push(Violation::NonFinite {
                            field: "transitions",
                            index: vec![s, a, next],
                        });
                    } else if p < 0.0 {
                        out.push(Violation::NegativeProbability { state: s, action: a, next, value: p });
                    }
                }
                let sum: f64 = row.iter().sum();
                if finite && (sum - 1.0).abs() > PROB_TOL {
                    out.push(Violation::RowSum { state: s, action: a, sum });
                }
            }
        }
        match self.reward_model {
            RewardModel::Bernoulli => {}
            RewardModel::Gaussian { sigma, mean_bound } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    out.push(Violation::BadNoiseParameter { name: "sigma", value: sigma });
                }
                if !(mean_bound.is_finite() && mean_bound > 0.0) {
                    out.push(Violation::BadNoiseParameter { name: "mean_bound", value: mean_bound });
                }
            }
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let mean = self.mean_reward(s, a);
                if !mean.is_finite() {
                    out.push(Violation::NonFinite { field: "mean_rewards", index: vec![s, a] });
                    continue;
                }
                match self.reward_model {
                    RewardModel::Bernoulli => {
                        if !(mean > 0.0 && mean <= 1.0) {
                            out.push(Violation::MeanOutOfRange { state: s, action: a, mean, lo: 0.0, hi: 1.0 });
                        }
                    }
                    RewardModel::Gaussian { mean_bound, .. } => {
                        if mean.abs() > mean_bound {
                            out.push(Violation::MeanOutOfRange {
                                state: s,
                                action: a,
                                mean,
                                lo: -mean_bound,
                                hi: mean_bound,
                            });
                        }
                    }
                }
            }
        }
        let mut init_finite = true;
        for (s, &p) in self.initial.iter().enumerate() {
            if !p.is_finite() {
                init_finite = false;
                out.push(Violation::NonFinite { field: "initial_state_distribution", index: vec![s] });
            } else if p < 0.0 {
                out.push(Violation::InitialNegative { state: s, value: p });
            }
        }
        let sum: f64 = self.initial.iter().sum();
        if init_finite && (sum - 1.0).abs() > PROB_TOL {
            out.push(Violation::InitialSum { sum });
        }
        out
    }

    /// `Ok(())` iff [`validate`](Self::validate) finds nothing.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(MdpError::Invalid(v))
        }
    }

    pub fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.initial, rng)
    }

    pub fn sample_transition<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<usize> {
        self.check_state(s)?;
        self.check_action(a)?;
        Ok(sample_categorical(self.transition_row(s, a), rng))
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<f64> {
        self.check_state(s)?;
        self.check_action(a)?;
        let mu = self.mean_reward(s, a);
        Ok(match self.reward_model {
            RewardModel::Bernoulli => {
                if rng.random::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::Gaussian { sigma, .. } => {
                let normal = Normal::new(mu, sigma).map_err(|_| {
                    MdpError::Invalid(vec![Violation::BadNoiseParameter { name: "sigma", value: sigma }])
                })?;
                normal.sample(rng)
            }
        })
    }

    pub fn to_file(&self) -> MdpFile {
        let (s_n, a_n) = (self.num_states, self.num_actions);
        MdpFile {
            num_states: s_n,
            num_actions: a_n,
            horizon: self.horizon,
            transitions: (0..s_n)
                .map(|s| (0..a_n).map(|a| self.transition_row(s, a).to_vec()).collect())
                .collect(),
            mean_rewards: (0..s_n)
                .map(|s| (0..a_n).map(|a| self.mean_reward(s, a)).collect())
                .collect(),
            reward_model: self.reward_model,
            initial_state_distribution: self.initial.clone(),
        }
    }

    pub fn from_file(file: MdpFile) -> Result<Self> {
        Self::new(
            file.num_states,
            file.num_actions,
            file.horizon,
            file.transitions,
            file.mean_rewards,
            file.reward_model,
            file.initial_state_distribution,
        )
    }

    /// Parses and validates an MDP from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec = Self::from_file(serde_json::from_str(text)?)?;
        spec.ensure_valid()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("MDP serialization cannot fail")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| MdpError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

fn check_index(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index < limit {
        Ok(())
    } else {
        Err(MdpError::IndexOutOfRange { what, index, limit })
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: u landed above the accumulated mass
    last_positive
}

/// Deterministic step-indexed policy, `actions[h][s]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    actions: Vec<Vec<usize>>,
}

impl Policy {
    pub fn new(actions: Vec<Vec<usize>>) -> Self {
        Self { actions }
    }

    /// The same action table at every step.
    pub fn stationary(per_state: Vec<usize>, horizon: usize) -> Self {
        Self { actions: vec![per_state; horizon] }
    }

    pub fn constant(action: usize, num_states: usize, horizon: usize) -> Self {
        Self::stationary(vec![action; num_states], horizon)
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h][s]
    }

    pub fn set_action(&mut self, h: usize, s: usize, a: usize) {
        self.actions[h][s] = a;
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.actions
    }

    /// Checks shape and action range against `spec`.
    pub fn check(&self, spec: &MdpSpec) -> Result<()> {
        if self.actions.len() != spec.horizon() {
            return Err(MdpError::DimensionMismatch(format!(
                "policy has {} steps, MDP horizon is {}",
                self.actions.len(),
                spec.horizon()
            )));
        }
        for row in &self.actions {
            if row.len() != spec.num_states() {
                return Err(MdpError::DimensionMismatch(format!(
                    "policy row has {} states, expected {}",
                    row.len(),
                    spec.num_states()
                )));
            }
            for &a in row {
                spec.check_action(a)?;
            }
        }
        Ok(())
    }
}

/// Step-indexed reward function `r(h, s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self::filled(horizon, num_states, num_actions, 0.0)
    }

    pub fn filled(horizon: usize, num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![value; horizon * num_states * num_actions],
        }
    }

    /// The true mean rewards of `spec`, repeated at every step.
    pub fn from_means(spec: &MdpSpec) -> Self {
        Self::from_fn(spec.horizon(), spec.num_states(), spec.num_actions(), |_, s, a| {
            spec.mean_reward(s, a)
        })
    }

    pub fn from_fn<F: FnMut(usize, usize, usize) -> f64>(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        mut f: F,
    ) -> Self {
        let mut values = Vec::with_capacity(horizon * num_states * num_actions);
        for h in 0..horizon {
            for s in 0..num_states {
                for a in 0..num_actions {
                    values.push(f(h, s, a));
                }
            }
        }
        Self { horizon, num_states, num_actions, values }
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn set(&mut self, h: usize, s: usize, a: usize, v: f64) {
        self.values[(h * self.num_states + s) * self.num_actions + a] = v;
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.horizon, self.num_states, self.num_actions)
    }

    /// Adds `c` to every entry.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += c);
        out
    }

    fn check(&self, spec: &MdpSpec) -> Result<()> {
        let expected = (spec.horizon(), spec.num_states(), spec.num_actions());
        if self.dims() != expected {
            return Err(MdpError::DimensionMismatch(format!(
                "reward table is {:?}, MDP is {:?} (H, S, A)",
                self.dims(),
                expected
            )));
        }
        Ok(())
    }
}

/// Maps a learner action at `(h, s)` to the action the environment executes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRemap {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    executed: Vec<usize>,
}

impl ActionRemap {
    pub fn identity(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self::from_fn(horizon, num_states, num_actions, |_, _, a| a)
    }

    pub fn from_fn<F: FnMut(usize, usize, usize) -> usize>(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        mut f: F,
    ) -> Self {
        let mut executed = Vec::with_capacity(horizon * num_states * num_actions);
        for h in 0..horizon {
            for s in 0..num_states {
                for a in 0..num_actions {
                    executed.push(f(h, s, a));
                }
            }
        }
        Self { horizon, num_states, num_actions, executed }
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> usize {
        self.executed[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn set(&mut self, h: usize, s: usize, a: usize, executed: usize) {
        self.executed[(h * self.num_states + s) * self.num_actions + a] = executed;
    }

    fn check(&self, spec: &MdpSpec) -> Result<()> {
        let expected = (spec.horizon(), spec.num_states(), spec.num_actions());
        if (self.horizon, self.num_states, self.num_actions) != expected {
            return Err(MdpError::DimensionMismatch("action remap shape differs from MDP".into()));
        }
        for &a in &self.executed {
            spec.check_action(a)?;
        }
        Ok(())
    }
}

/// `V_h(s)` for `h` in `0..=horizon`; the last row is the terminal zero row.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    num_states: usize,
    values: Vec<f64>,
}

impl ValueTable {
    fn zeros(horizon: usize, num_states: usize) -> Self {
        Self { num_states, values: vec![0.0; (horizon + 1) * num_states] }
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize) -> f64 {
        self.values[h * self.num_states + s]
    }

    /// All states at step `h`.
    pub fn row(&self, h: usize) -> &[f64] {
        &self.values[h * self.num_states..(h + 1) * self.num_states]
    }

    fn set(&mut self, h: usize, s: usize, v: f64) {
        self.values[h * self.num_states + s] = v;
    }
}

/// `Q_h(s, a)` for `h` in `0..horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self { num_states, num_actions, values: vec![0.0; horizon * num_states * num_actions] }
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn actions(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.values[start..start + self.num_actions]
    }

    fn set(&mut self, h: usize, s: usize, a: usize, v: f64) {
        self.values[(h * self.num_states + s) * self.num_actions + a] = v;
    }
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Exact evaluation of `policy` under `rewards`.
pub fn evaluate_policy(spec: &MdpSpec, rewards: &RewardTable, policy: &Policy) -> Result<(ValueTable, QTable)> {
    evaluate_inner(spec, rewards, None, policy)
}

/// Like [`evaluate_policy`] but transitions follow `remap(h, s, a)` instead of `a`.
pub fn evaluate_policy_remapped(
    spec: &MdpSpec,
    rewards: &RewardTable,
    remap: &ActionRemap,
    policy: &Policy,
) -> Result<(ValueTable, QTable)> {
    remap.check(spec)?;
    evaluate_inner(spec, rewards, Some(remap), policy)
}

fn evaluate_inner(
    spec: &MdpSpec,
    rewards: &RewardTable,
    remap: Option<&ActionRemap>,
    policy: &Policy,
) -> Result<(ValueTable, QTable)> {
    rewards.check(spec)?;
    policy.check(spec)?;
    let (horizon, n_s, n_a) = (spec.horizon(), spec.num_states(), spec.num_actions());
    let mut v = ValueTable::zeros(horizon, n_s);
    let mut q = QTable::zeros(horizon, n_s, n_a);
    for h in (0..horizon).rev() {
        for s in 0..n_s {
            for a in 0..n_a {
                let executed = remap.map_or(a, |m| m.get(h, s, a));
                let next = spec.expect(s, executed, v.row(h + 1));
                q.set(h, s, a, rewards.get(h, s, a) + next);
            }
            v.set(h, s, q.get(h, s, policy.action(h, s)));
        }
    }
    Ok((v, q))
}

/// Bellman backward induction with greedy (lowest-index tie-break) policy.
pub fn optimal_values(spec: &MdpSpec, rewards: &RewardTable) -> Result<(ValueTable, QTable, Policy)> {
    optimal_inner(spec, rewards, None)
}

pub fn optimal_values_remapped(
    spec: &MdpSpec,
    rewards: &RewardTable,
    remap: &ActionRemap,
) -> Result<(ValueTable, QTable, Policy)> {
    remap.check(spec)?;
    optimal_inner(spec, rewards, Some(remap))
}

fn optimal_inner(
    spec: &MdpSpec,
    rewards: &RewardTable,
    remap: Option<&ActionRemap>,
) -> Result<(ValueTable, QTable, Policy)> {
    rewards.check(spec)?;
    let (horizon, n_s, n_a) = (spec.horizon(), spec.num_states(), spec.num_actions());
    let mut v = ValueTable::zeros(horizon, n_s);
    let mut q = QTable::zeros(horizon, n_s, n_a);
    let mut policy = Policy::constant(0, n_s, horizon);
    for h in (0..horizon).rev() {
        for s in 0..n_s {
            for a in 0..n_a {
                let executed = remap.map_or(a, |m| m.get(h, s, a));
                let next = spec.expect(s, executed, v.row(h + 1));
                q.set(h, s, a, rewards.get(h, s, a) + next);
            }
            let best = argmax_lowest(q.actions(h, s));
            policy.set_action(h, s, best);
            v.set(h, s, q.get(h, s, best));
        }
    }
    Ok((v, q, policy))
}

/// Cumulative true regret: sum over episodes of `V*_1(s_t) - V^{pi_t}_1(s_t)`.
pub fn regret_of_trajectory(spec: &MdpSpec, initial_states: &[usize], policies: &[Policy]) -> Result<f64> {
    if initial_states.len() != policies.len() {
        return Err(MdpError::DimensionMismatch(format!(
            "{} initial states but {} policies",
            initial_states.len(),
            policies.len()
        )));
    }
    let rewards = RewardTable::from_means(spec);
    let (v_star, _, _) = optimal_values(spec, &rewards)?;
    let mut total = 0.0;
    for (&s, pi) in initial_states.iter().zip(policies) {
        spec.check_state(s)?;
        let (v, _) = evaluate_policy(spec, &rewards, pi)?;
        total += v_star.get(0, s) - v.get(0, s);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state() -> MdpSpec {
        // the attack-insufficiency instance: a1 keeps the state, a2 flips it
        MdpSpec::new(
            2,
            2,
            2,
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ],
            vec![vec![0.25, 1.0], vec![0.6, 1.0]],
            RewardModel::Bernoulli,
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn bad_row_is_reported_with_indices() {
        let mut file = two_state().to_file();
        file.transitions[1][0] = vec![0.5, 0.4];
        let spec = MdpSpec::from_file(file).unwrap();
        let v = spec.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::RowSum { state: 1, action: 0, .. }));
    }

    #[test]
    fn zero_bernoulli_mean_is_rejected() {
        let mut spec = two_state();
        spec.set_mean_reward(0, 1, 0.0);
        let v = spec.validate();
        assert!(matches!(v[..], [Violation::MeanOutOfRange { state: 0, action: 1, .. }]));
    }

    #[test]
    fn gaussian_mean_bound_checked() {
        let mut file = two_state().to_file();
        file.reward_model = RewardModel::Gaussian { sigma: 1.0, mean_bound: 0.9 };
        let spec = MdpSpec::from_file(file).unwrap();
        // mu = 1.0 in two cells exceeds M = 0.9
        assert_eq!(spec.validate().len(), 2);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let err = MdpSpec::new(
            2,
            2,
            1,
            vec![vec![vec![1.0, 0.0]]],
            vec![vec![0.5, 0.5]; 2],
            RewardModel::Bernoulli,
            vec![1.0, 0.0],
        );
        assert!(matches!(err, Err(MdpError::DimensionMismatch(_))));
    }

    #[test]
    fn json_rejects_non_finite_and_unknown_fields() {
        let spec = two_state();
        let text = spec.to_json();
        assert_eq!(MdpSpec::from_json(&text).unwrap(), spec);
        assert!(MdpSpec::from_json(&text.replacen("0.25", "NaN", 1)).is_err());
        assert!(MdpSpec::from_json(&text.replacen("0.25", "1e999", 1)).is_err());
        let extra = text.replacen('{', "{\"bogus\": 1,", 1);
        assert!(MdpSpec::from_json(&extra).is_err());
    }

    #[test]
    fn sampling_rejects_bad_indices() {
        let spec = two_state();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(spec.sample_transition(2, 0, &mut rng).is_err());
        assert!(spec.sample_reward(0, 5, &mut rng).is_err());
    }

    #[test]
    fn deterministic_rows_always_land() {
        let spec = two_state();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(spec.sample_transition(0, 0, &mut rng).unwrap(), 0);
            assert_eq!(spec.sample_transition(0, 1, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn bernoulli_one_always_pays() {
        let spec = two_state();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..1000).all(|_| spec.sample_reward(0, 1, &mut rng).unwrap() == 1.0));
    }

    #[test]
    fn evaluation_on_two_state_chain() {
        let spec = two_state();
        let r = RewardTable::from_means(&spec);
        let (v, _) = evaluate_policy(&spec, &r, &Policy::constant(0, 2, 2)).unwrap();
        assert_eq!(v.get(0, 0), 0.5);
        let deviate = Policy::new(vec![vec![1, 1], vec![0, 0]]);
        let (v, _) = evaluate_policy(&spec, &r, &deviate).unwrap();
        assert!((v.get(0, 0) - 1.6).abs() < 1e-12);
        // a2 twice collects 1 + 1; no deterministic policy beats it
        let (v_star, _, pi) = optimal_values(&spec, &r).unwrap();
        assert_eq!(pi.action(0, 0), 1);
        assert_eq!(pi.action(1, 1), 1);
        assert!((v_star.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let spec = two_state();
        let r = RewardTable::zeros(2, 2, 2);
        let (v, q) = evaluate_policy(&spec, &r, &Policy::constant(1, 2, 2)).unwrap();
        for h in 0..=2 {
            assert_eq!(v.row(h), &[0.0, 0.0]);
        }
        assert!(q.actions(0, 0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dominant_action_is_selected_and_single_action_trivial() {
        let spec = two_state();
        let r = RewardTable::from_fn(2, 2, 2, |h, s, a| if a == (h + s) % 2 { 10.0 } else { 0.0 });
        let (_, _, pi) = optimal_values(&spec, &r).unwrap();
        for h in 0..2 {
            for s in 0..2 {
                assert_eq!(pi.action(h, s), (h + s) % 2);
            }
        }

        let single = MdpSpec::new(
            2,
            1,
            3,
            vec![vec![vec![0.5, 0.5]], vec![vec![0.1, 0.9]]],
            vec![vec![0.3], vec![0.7]],
            RewardModel::Bernoulli,
            vec![0.5, 0.5],
        )
        .unwrap();
        let (_, _, pi) = optimal_values(&single, &RewardTable::from_means(&single)).unwrap();
        assert_eq!(pi, Policy::constant(0, 2, 3));
    }

    #[test]
    fn ties_break_to_lowest_action() {
        assert_eq!(argmax_lowest(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax_lowest(&[0.1, 0.9, 0.9]), 1);
    }

    #[test]
    fn horizon_one_value_is_immediate_reward() {
        let spec = MdpSpec::new(
            1,
            2,
            1,
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![0.2, 0.7]],
            RewardModel::Bernoulli,
            vec![1.0],
        )
        .unwrap();
        let (v, _, _) = optimal_values(&spec, &RewardTable::from_means(&spec)).unwrap();
        assert_eq!(v.get(0, 0), 0.7);
    }

    #[test]
    fn regret_is_additive() {
        let spec = two_state();
        let plus = Policy::constant(0, 2, 2);
        let (_, _, star) = optimal_values(&spec, &RewardTable::from_means(&spec)).unwrap();
        assert_eq!(regret_of_trajectory(&spec, &[0, 0, 0], &vec![star.clone(); 3]).unwrap(), 0.0);
        let r = regret_of_trajectory(&spec, &[0; 10], &vec![plus.clone(); 10]).unwrap();
        assert!((r - 10.0 * (2.0 - 0.5)).abs() < 1e-12);
        let mixed = regret_of_trajectory(&spec, &[0, 0], &[plus, star]).unwrap();
        assert!((mixed - 1.5).abs() < 1e-12);
        assert!(regret_of_trajectory(&spec, &[0], &[]).is_err());
    }

    #[test]
    fn reward_table_shape_checked() {
        let spec = two_state();
        let bad = RewardTable::zeros(3, 2, 2);
        assert!(evaluate_policy(&spec, &bad, &Policy::constant(0, 2, 2)).is_err());
    }
}
