//! Best achievable return within a policy class.
//!
//! For tabular softmax policies this is the value-iteration optimum. A shared
//! softmax plays the same action distribution everywhere and generally cannot
//! reach it, so its optimum is found by multi-start gradient ascent on `J`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::mdp::{evaluate_policy, value_iteration, PolicyTable, TabularMdp};
use crate::policy::{policy_gradient_from, ParamMode, SoftmaxPolicy, LOGIT_PROB_FLOOR};
use crate::Result;

/// Random restarts on top of the uniform start.
pub const RESTARTS: usize = 8;
const MAX_ASCENT_ITERS: usize = 4000;
const VI_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ClassOptimum {
    /// Best return found in the class.
    pub j: f64,
    pub policy: SoftmaxPolicy,
    /// Unrestricted optimum from value iteration.
    pub value_iteration_j: f64,
}

/// Optimum of `J` over softmax policies of `mode`; `seed` drives restarts.
pub fn class_optimum(mdp: &TabularMdp, mode: ParamMode, seed: u64) -> Result<ClassOptimum> {
    let vi = value_iteration(mdp, VI_TOLERANCE)?;
    let value_iteration_j = vi.optimal_return(mdp);
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if mode == ParamMode::Tabular {
        let table = PolicyTable::deterministic(&vi.greedy, na)?;
        return Ok(ClassOptimum {
            j: value_iteration_j,
            policy: SoftmaxPolicy::tabular_from_table(&table, LOGIT_PROB_FLOOR),
            value_iteration_j,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 2.0).expect("valid normal");
    let mut starts = vec![vec![0.0; na]];
    for _ in 0..RESTARTS {
        starts.push((0..na).map(|_| normal.sample(&mut rng)).collect());
    }
    let results = starts
        .into_par_iter()
        .map(|theta| {
            ascend(
                mdp,
                SoftmaxPolicy::from_logits(ParamMode::Shared, ns, na, theta)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let (j, policy) = results
        .into_iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start");
    Ok(ClassOptimum {
        j,
        policy,
        value_iteration_j,
    })
}

/// Monotone gradient ascent with step doubling and halving.
fn ascend(mdp: &TabularMdp, mut policy: SoftmaxPolicy) -> Result<(f64, SoftmaxPolicy)> {
    let mut eval = evaluate_policy(mdp, &policy.table())?;
    let mut step = 1.0;
    for _ in 0..MAX_ASCENT_ITERS {
        let grad = policy_gradient_from(&policy, &eval);
        let mut accepted = false;
        while step > 1e-12 {
            let theta = policy
                .theta()
                .iter()
                .zip(&grad)
                .map(|(t, g)| t + step * g)
                .collect();
            let candidate = policy.with_theta(theta)?;
            let next = evaluate_policy(mdp, &candidate.table())?;
            if next.j >= eval.j {
                let gain = next.j - eval.j;
                policy = candidate;
                eval = next;
                step *= 2.0;
                accepted = gain > 0.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((eval.j, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_random_mdp;

    #[test]
    fn tabular_class_is_value_iteration() {
        let mdp = build_random_mdp(5, 3, 0.2, 4).unwrap();
        let opt = class_optimum(&mdp, ParamMode::Tabular, 0).unwrap();
        assert_eq!(opt.j, opt.value_iteration_j);
        let j = evaluate_policy(&mdp, &opt.policy.table()).unwrap().j;
        assert!((j - opt.j).abs() < 1e-9);
    }

    #[test]
    fn shared_class_is_below_value_iteration() {
        let mdp = build_random_mdp(5, 3, 0.2, 4).unwrap();
        let opt = class_optimum(&mdp, ParamMode::Shared, 1).unwrap();
        assert!(opt.j <= opt.value_iteration_j + 1e-12);
        let uniform = evaluate_policy(&mdp, &PolicyTable::uniform(5, 3))
            .unwrap()
            .j;
        assert!(opt.j >= uniform);
    }
}
