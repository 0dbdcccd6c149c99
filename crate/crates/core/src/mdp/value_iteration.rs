use super::TabularMdp;
use crate::{Error, Result};

/// Optimal values and a greedy deterministic policy.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub values: Vec<f64>,
    /// Greedy action per state, ties broken to the lowest index.
    pub greedy: Vec<usize>,
    /// `‖T V − V‖_∞` for the returned `values`.
    pub residual: f64,
    pub sweeps: usize,
}

impl OptimalSolution {
    /// `Σ_s d0(s) V*(s)`.
    pub fn optimal_return(&self, mdp: &TabularMdp) -> f64 {
        mdp.start()
            .iter()
            .zip(&self.values)
            .map(|(d, v)| d * v)
            .sum()
    }
}

/// Actions whose backed-up value is within this margin of the best are ties.
const TIE_MARGIN: f64 = 1e-12;

fn backup(mdp: &TabularMdp, values: &[f64], s: usize, a: usize) -> f64 {
    let next: f64 = mdp
        .transition(s, a)
        .iter()
        .zip(values)
        .map(|(p, v)| p * v)
        .sum();
    mdp.reward(s, a) + mdp.gamma() * next
}

/// Greedy actions with respect to `values`, lowest index among ties.
pub fn greedy_actions(mdp: &TabularMdp, values: &[f64]) -> Vec<usize> {
    (0..mdp.n_states())
        .map(|s| {
            let q: Vec<f64> = (0..mdp.n_actions())
                .map(|a| backup(mdp, values, s, a))
                .collect();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            q.iter().position(|&x| x >= best - TIE_MARGIN).unwrap_or(0)
        })
        .collect()
}

/// Synchronous value iteration until the Bellman residual is at most `tolerance`.
pub fn value_iteration(mdp: &TabularMdp, tolerance: f64) -> Result<OptimalSolution> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let ns = mdp.n_states();
    let mut values = vec![0.0; ns];
    let mut sweeps = 0;
    loop {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| backup(mdp, &values, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let residual = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        sweeps += 1;
        if residual <= tolerance {
            let greedy = greedy_actions(mdp, &values);
            return Ok(OptimalSolution {
                values,
                greedy,
                residual,
                sweeps,
            });
        }
        values = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_four_room, build_random_mdp, evaluate_policy, PolicyTable};

    #[test]
    fn single_state_closed_form() {
        let mdp = TabularMdp::from_flat(
            1,
            2,
            0.5,
            vec![1.0],
            vec![false],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
        )
        .unwrap();
        let sol = value_iteration(&mdp, 1e-12).unwrap();
        assert!((sol.values[0] - 4.0).abs() < 1e-10);
        assert_eq!(sol.greedy, vec![1]);
    }

    #[test]
    fn ties_break_low() {
        let mdp = TabularMdp::from_flat(
            1,
            3,
            0.5,
            vec![1.0],
            vec![false],
            vec![1.0; 3],
            vec![1.0, 2.0, 2.0],
        )
        .unwrap();
        assert_eq!(value_iteration(&mdp, 1e-12).unwrap().greedy, vec![1]);
    }

    #[test]
    fn four_room_optimum_is_discounted_path() {
        let mdp = build_four_room();
        let sol = value_iteration(&mdp, 1e-10).unwrap();
        assert!(sol.residual <= 1e-10);
        let expected = mdp.gamma().powi(19);
        assert!((sol.optimal_return(&mdp) - expected).abs() < 1e-9);
    }

    #[test]
    fn greedy_policy_is_stable_and_optimal() {
        for seed in 0..10 {
            let mdp = build_random_mdp(6, 3, 0.2, seed).unwrap();
            let sol = value_iteration(&mdp, 1e-12).unwrap();
            let pi = PolicyTable::deterministic(&sol.greedy, 3).unwrap();
            let eval = evaluate_policy(&mdp, &pi).unwrap();
            assert_eq!(greedy_actions(&mdp, &eval.v), sol.greedy);
            for s in 0..6 {
                assert!((eval.v[s] - sol.values[s]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        assert!(value_iteration(&build_four_room(), 0.0).is_err());
    }
}
