use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::TabularMdp;
use crate::{Error, Result};

/// Discount used by generated instances; change it with [`TabularMdp::with_gamma`].
pub const RANDOM_MDP_GAMMA: f64 = 0.9;

fn dirichlet_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random dense MDP, deterministic in `rng_seed`.
///
/// Transition rows and the start distribution are flat-Dirichlet draws.
/// `round(reward_sparsity * n_states * n_actions)` rewards are zero, the
/// others are uniform on `(0, 1]`. No state is terminal.
pub fn build_random_mdp(
    n_states: usize,
    n_actions: usize,
    reward_sparsity: f64,
    rng_seed: u64,
) -> Result<TabularMdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument(
            "random MDP needs at least one state and one action".into(),
        ));
    }
    if !(0.0..=1.0).contains(&reward_sparsity) {
        return Err(Error::InvalidArgument(format!(
            "reward sparsity {reward_sparsity} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(dirichlet_row(&mut rng, n_states));
    }
    let n_pairs = n_states * n_actions;
    let n_zero = (reward_sparsity * n_pairs as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_pairs).collect();
    order.shuffle(&mut rng);
    let mut reward: Vec<f64> = (0..n_pairs).map(|_| 1.0 - rng.random::<f64>()).collect();
    for &i in &order[..n_zero] {
        reward[i] = 0.0;
    }
    let start = dirichlet_row(&mut rng, n_states);
    TabularMdp::from_flat(
        n_states,
        n_actions,
        RANDOM_MDP_GAMMA,
        start,
        vec![false; n_states],
        transition,
        reward,
    )
}
