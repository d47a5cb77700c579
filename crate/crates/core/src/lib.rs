//! Simulation laboratory for man-in-the-middle poisoning attacks on episodic
//! tabular reinforcement learning.
//!
//! * [`mdp`]: tabular episodic MDPs and exact backward induction.
//! * [`learner`]: optimistic Q-learning, the attacked agent.
//! * [`attacker`]: the attack strategies and their cost ledger.
//! * [`feasibility`]: exact audits for reward-only and action-only attacks.
//! * [`harness`]: experiment configs, simulations, scaling fits and the CLI.

pub mod attacker;
pub mod feasibility;
pub mod harness;
pub mod learner;
pub mod mdp;

pub use attacker::{AttackConfig, Attacker, CostLedger, EstimatorState, Strategy};
pub use learner::{LearnerConfig, LearnerState, StepOutcome};
pub use mdp::{MdpSpec, Policy, RewardModel, RewardTable};
