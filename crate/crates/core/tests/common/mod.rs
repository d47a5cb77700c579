//! Brute-force oracles shared by the integration tests. Nothing here calls the
//! library's backward induction.
#![allow(dead_code)]

use poisonlab::harness::{generate_random_mdp, GeneratorParams};
use poisonlab::mdp::{MdpSpec, Policy, RewardModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every deterministic non-stationary policy, as `[h][s] -> a`.
pub fn all_policies(num_states: usize, num_actions: usize, horizon: usize) -> Vec<Vec<Vec<usize>>> {
    let cells = num_states * horizon;
    let total = num_actions.pow(cells as u32);
    (0..total)
        .map(|mut code| {
            let mut p = vec![vec![0; num_states]; horizon];
            for row in p.iter_mut() {
                for a in row.iter_mut() {
                    *a = code % num_actions;
                    code /= num_actions;
                }
            }
            p
        })
        .collect()
}

/// Every assignment of `num_cells` slots drawn from `choices`.
pub fn all_assignments<T: Copy>(num_cells: usize, choices: &[T]) -> Vec<Vec<T>> {
    let total = choices.len().pow(num_cells as u32);
    (0..total)
        .map(|mut code| {
            (0..num_cells)
                .map(|_| {
                    let c = choices[code % choices.len()];
                    code /= choices.len();
                    c
                })
                .collect()
        })
        .collect()
}

/// Expected return of `policy` from `(h, s)`, by recursion over successor
/// states. `reward(h, s, a)` is what the learner observes for action `a`;
/// `exec(h, s, a)` is the action that drives the transition.
pub fn policy_value<R, E>(spec: &MdpSpec, reward: &R, exec: &E, policy: &[Vec<usize>], h: usize, s: usize) -> f64
where
    R: Fn(usize, usize, usize) -> f64,
    E: Fn(usize, usize, usize) -> usize,
{
    if h == spec.horizon() {
        return 0.0;
    }
    let a = policy[h][s];
    let row = spec.transition_row(s, exec(h, s, a));
    let mut v = reward(h, s, a);
    for (next, &p) in row.iter().enumerate() {
        if p > 0.0 {
            v += p * policy_value(spec, reward, exec, policy, h + 1, next);
        }
    }
    v
}

/// `max over all deterministic policies` of the value at every `(h, s)`,
/// with a zero row at `h = H`.
pub fn best_values<R, E>(spec: &MdpSpec, reward: &R, exec: &E) -> Vec<Vec<f64>>
where
    R: Fn(usize, usize, usize) -> f64,
    E: Fn(usize, usize, usize) -> usize,
{
    let (n_s, n_a, horizon) = (spec.num_states(), spec.num_actions(), spec.horizon());
    let mut best = vec![vec![f64::NEG_INFINITY; n_s]; horizon + 1];
    best[horizon] = vec![0.0; n_s];
    for pol in all_policies(n_s, n_a, horizon) {
        for (h, row) in best.iter_mut().enumerate().take(horizon) {
            for (s, b) in row.iter_mut().enumerate() {
                *b = b.max(policy_value(spec, reward, exec, &pol, h, s));
            }
        }
    }
    best
}

/// Whether `target` is the strict optimum at every `(h, s)`: every deviating
/// first action, followed by the best continuation, is strictly worse.
pub fn strictly_teaches<R, E>(spec: &MdpSpec, reward: &R, exec: &E, target: &Policy) -> bool
where
    R: Fn(usize, usize, usize) -> f64,
    E: Fn(usize, usize, usize) -> usize,
{
    let best = best_values(spec, reward, exec);
    let rows = target.rows();
    for h in 0..spec.horizon() {
        for s in 0..spec.num_states() {
            let tgt = rows[h][s];
            let v_target = policy_value(spec, reward, exec, rows, h, s);
            for a in (0..spec.num_actions()).filter(|&a| a != tgt) {
                let row = spec.transition_row(s, exec(h, s, a));
                let q: f64 = reward(h, s, a) + row.iter().zip(&best[h + 1]).map(|(p, v)| p * v).sum::<f64>();
                if q >= v_target {
                    return false;
                }
            }
        }
    }
    true
}

/// Non-target cells `(h, s, a)` in lexicographic order.
pub fn non_target_cells(spec: &MdpSpec, target: &Policy) -> Vec<(usize, usize, usize)> {
    let mut cells = Vec::new();
    for h in 0..spec.horizon() {
        for s in 0..spec.num_states() {
            for a in 0..spec.num_actions() {
                if a != target.action(h, s) {
                    cells.push((h, s, a));
                }
            }
        }
    }
    cells
}

/// Reward-only oracle: does any assignment of observed rewards from `grid`
/// to the non-target cells make `target` the strict optimum?
pub fn reward_only_feasible(spec: &MdpSpec, target: &Policy, grid: &[f64]) -> bool {
    let cells = non_target_cells(spec, target);
    let exec = |_h: usize, _s: usize, a: usize| a;
    all_assignments(cells.len(), grid).into_iter().any(|values| {
        let reward = |h: usize, s: usize, a: usize| match cells.iter().position(|&c| c == (h, s, a)) {
            Some(i) => values[i],
            None => spec.mean_reward(s, a),
        };
        strictly_teaches(spec, &reward, &exec, target)
    })
}

/// Action-only oracle: does any remap of the non-target cells make `target`
/// the strict optimum? Observed rewards are the executed action's means.
pub fn action_only_feasible(spec: &MdpSpec, target: &Policy) -> bool {
    let cells = non_target_cells(spec, target);
    let actions: Vec<usize> = (0..spec.num_actions()).collect();
    all_assignments(cells.len(), &actions).into_iter().any(|remap| {
        let exec = |h: usize, s: usize, a: usize| match cells.iter().position(|&c| c == (h, s, a)) {
            Some(i) => remap[i],
            None => a,
        };
        let reward = |h: usize, s: usize, a: usize| spec.mean_reward(s, exec(h, s, a));
        strictly_teaches(spec, &reward, &exec, target)
    })
}

/// `V^pi` and `Q^pi` by plain backward loops, `[h][s]` and `[h][s][a]`.
pub fn oracle_policy_tables(
    spec: &MdpSpec,
    reward: impl Fn(usize, usize, usize) -> f64,
    policy: &Policy,
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let (n_s, n_a, horizon) = (spec.num_states(), spec.num_actions(), spec.horizon());
    let mut v = vec![vec![0.0; n_s]; horizon + 1];
    let mut q = vec![vec![vec![0.0; n_a]; n_s]; horizon];
    for h in (0..horizon).rev() {
        for s in 0..n_s {
            for a in 0..n_a {
                let mut next = 0.0;
                for (s2, p) in spec.transition_row(s, a).iter().enumerate() {
                    next += p * v[h + 1][s2];
                }
                q[h][s][a] = reward(h, s, a) + next;
            }
            v[h][s] = q[h][s][policy.action(h, s)];
        }
    }
    (v, q)
}

/// A deterministic 2x2x2 instance; `flip_on_a1` swaps which action keeps the
/// state.
pub fn two_by_two(means: [f64; 4], flip_on_a1: bool) -> MdpSpec {
    let stay = [vec![1.0, 0.0], vec![0.0, 1.0]];
    let flip = [vec![0.0, 1.0], vec![1.0, 0.0]];
    let (a1, a2) = if flip_on_a1 { (&flip, &stay) } else { (&stay, &flip) };
    MdpSpec::new(
        2,
        2,
        2,
        vec![vec![a1[0].clone(), a2[0].clone()], vec![a1[1].clone(), a2[1].clone()]],
        vec![vec![means[0], means[1]], vec![means[2], means[3]]],
        RewardModel::Bernoulli,
        vec![1.0, 0.0],
    )
    .unwrap()
}

/// A random MDP and designated target from the library generator.
pub fn random_mdp(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    reward_model: RewardModel,
) -> (MdpSpec, Policy) {
    let params = GeneratorParams {
        num_states,
        num_actions,
        horizon,
        min_target_mean: 0.3,
        dirichlet_concentration: 1.0,
        reward_model,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_random_mdp(&params, &mut rng).unwrap()
}
