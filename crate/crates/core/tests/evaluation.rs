mod common;

use pgop_core::mdp::{build_four_room, build_random_mdp, value_iteration};
use pgop_core::policy::policy_gradient;
use pgop_core::trajectory::enumerate;
use pgop_core::{evaluate_policy, ParamMode, PolicyTable, SoftmaxPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_evaluation_matches_reference_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..200 {
        let ns = rng.random_range(1..=8);
        let na = rng.random_range(1..=4);
        let mdp = build_random_mdp(ns, na, 0.3, seed).unwrap();
        let pi = common::probs(
            ParamMode::Tabular,
            ns,
            na,
            &common::random_theta(&mut rng, ParamMode::Tabular, ns, na, 3.0),
        );
        let reference = common::evaluate(&mdp, &pi);
        let eval = evaluate_policy(&mdp, &PolicyTable::from_rows(&pi).unwrap()).unwrap();
        assert!(common::max_abs_diff(&eval.v, &reference.v) < 1e-10);
        assert!(common::max_abs_diff(&eval.occupancy, &reference.d) < 1e-10);
        for s in 0..ns {
            assert!(common::max_abs_diff(eval.q_row(s), &reference.q[s]) < 1e-10);
        }
        assert!((eval.j - reference.j).abs() < 1e-10);
        let mass: f64 = eval.occupancy.iter().sum();
        assert!((mass - 1.0 / (1.0 - mdp.gamma())).abs() < 1e-9);
        let via_rewards: f64 = (0..ns)
            .map(|s| eval.occupancy[s] * (0..na).map(|a| pi[s][a] * mdp.reward(s, a)).sum::<f64>())
            .sum();
        assert!((via_rewards - eval.j).abs() < 1e-10);
    }
}

/// Truncated return of the uniform policy on four-room, by propagating the
/// state distribution forward for `horizon` steps.
#[test]
fn four_room_uniform_matches_truncated_rollout() {
    let mdp = build_four_room();
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let horizon = 200;
    let mut dist = mdp.start().to_vec();
    let mut truncated = 0.0;
    for t in 0..horizon {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let mass = dist[s] / na as f64;
                truncated += mdp.gamma().powi(t) * mass * mdp.reward(s, a);
                for (u, p) in mdp.transition(s, a).iter().enumerate() {
                    next[u] += mass * p;
                }
            }
        }
        dist = next;
    }
    let j = evaluate_policy(&mdp, &PolicyTable::uniform(ns, na))
        .unwrap()
        .j;
    let tail = mdp.gamma().powi(horizon) * mdp.max_reward() / (1.0 - mdp.gamma());
    assert!(j >= truncated - 1e-12);
    assert!(j - truncated <= tail, "{j} vs {truncated}, tail {tail}");
}

#[test]
fn enumeration_matches_evaluation_on_absorbing_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for ns in 2..=6 {
        let mdp = common::layered_mdp(&mut rng, ns, 3, 0.9);
        let pi = common::probs(
            ParamMode::Tabular,
            ns,
            3,
            &common::random_theta(&mut rng, ParamMode::Tabular, ns, 3, 1.0),
        );
        let table = PolicyTable::from_rows(&pi).unwrap();
        let ens = enumerate(&mdp, &table, ns).unwrap();
        let total: f64 = ens.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let j = evaluate_policy(&mdp, &table).unwrap().j;
        assert!((ens.expected_return() - j).abs() < 1e-12);
    }
}

#[test]
fn value_iteration_agrees_with_brute_force_over_deterministic_policies() {
    for seed in 0..20 {
        let mdp = build_random_mdp(3, 3, 0.2, 50 + seed).unwrap();
        let sol = value_iteration(&mdp, 1e-12).unwrap();
        let mut best = f64::NEG_INFINITY;
        for code in 0..27usize {
            let actions = [code % 3, (code / 3) % 3, code / 9];
            let rows: Vec<Vec<f64>> = actions
                .iter()
                .map(|&a| (0..3).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
                .collect();
            best = best.max(common::evaluate(&mdp, &rows).j);
        }
        assert!((sol.optimal_return(&mdp) - best).abs() < 1e-9);
    }
}

#[test]
fn shared_gradient_is_sum_of_tabular_gradient_over_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for seed in 0..20 {
        let mdp = build_random_mdp(5, 3, 0.2, 80 + seed).unwrap();
        let theta = common::random_theta(&mut rng, ParamMode::Shared, 5, 3, 1.0);
        let shared = SoftmaxPolicy::from_logits(ParamMode::Shared, 5, 3, theta.clone()).unwrap();
        let tabular = SoftmaxPolicy::from_logits(
            ParamMode::Tabular,
            5,
            3,
            theta.iter().cycle().take(15).copied().collect(),
        )
        .unwrap();
        let g_shared = policy_gradient(&mdp, &shared).unwrap();
        let g_tab = policy_gradient(&mdp, &tabular).unwrap();
        for a in 0..3 {
            let summed: f64 = (0..5).map(|s| g_tab[s * 3 + a]).sum();
            assert!((summed - g_shared[a]).abs() < 1e-10);
        }
    }
}
