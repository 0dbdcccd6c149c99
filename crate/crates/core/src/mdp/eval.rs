use nalgebra::{DMatrix, DVector};

use super::TabularMdp;
use crate::{Error, Result};

/// Row tolerance for explicit per-state action distributions.
const ROW_TOL: f64 = 1e-10;

/// An explicit stochastic policy: one action distribution per state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::InvalidPolicy(format!(
                "expected {} probabilities, got {}",
                n_states * n_actions,
                probs.len()
            )));
        }
        let table = PolicyTable {
            n_states,
            n_actions,
            probs,
        };
        for s in 0..n_states {
            let row = table.row(s);
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidPolicy(format!(
                    "row {s} has an invalid entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {sum}")));
            }
        }
        Ok(table)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::InvalidPolicy("ragged rows".into()));
        }
        Self::new(rows.len(), n_actions, rows.concat())
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyTable {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Deterministic policy picking `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidPolicy(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(PolicyTable {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Largest per-state total-variation distance to `other`.
    pub fn max_total_variation(&self, other: &PolicyTable) -> f64 {
        (0..self.n_states)
            .map(|s| crate::divergence::total_variation(self.row(s), other.row(s)))
            .fold(0.0, f64::max)
    }
}

/// Exact value quantities of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEval {
    /// `V(s)`.
    pub v: Vec<f64>,
    /// `Q(s, a)`, row-major.
    pub q: Vec<f64>,
    /// Unnormalized discounted occupancy `Σ_t γ^t Pr(s_t = s)`; sums to
    /// `1 / (1 - γ)`.
    pub occupancy: Vec<f64>,
    /// Expected discounted return `J`.
    pub j: f64,
    n_actions: usize,
}

impl PolicyEval {
    pub fn n_states(&self) -> usize {
        self.v.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `Σ_s d(s) V(s)`, the normalizer of the state-action improvement.
    pub fn weighted_value(&self) -> f64 {
        self.occupancy.iter().zip(&self.v).map(|(d, v)| d * v).sum()
    }
}

/// Evaluates `pi` on `mdp` by two dense LU solves: `(I - γ P_π) V = r_π`
/// and `(I - γ P_π)ᵀ d = d0`.
pub fn evaluate_policy(mdp: &TabularMdp, pi: &PolicyTable) -> Result<PolicyEval> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if pi.n_states() != ns || pi.n_actions() != na {
        return Err(Error::InvalidPolicy(format!(
            "policy is {}x{}, MDP is {ns}x{na}",
            pi.n_states(),
            pi.n_actions()
        )));
    }
    let gamma = mdp.gamma();
    let mut system = DMatrix::<f64>::identity(ns, ns);
    let mut r_pi = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let p = pi.get(s, a);
            if p == 0.0 {
                continue;
            }
            r_pi[s] += p * mdp.reward(s, a);
            for (t, &pt) in mdp.transition(s, a).iter().enumerate() {
                system[(s, t)] -= gamma * p * pt;
            }
        }
    }
    let start = DVector::from_column_slice(mdp.start());
    let v = system.clone().lu().solve(&r_pi).ok_or(Error::Singular)?;
    let d = system
        .transpose()
        .lu()
        .solve(&start)
        .ok_or(Error::Singular)?;

    let v: Vec<f64> = v.iter().copied().collect();
    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let next: f64 = mdp
                .transition(s, a)
                .iter()
                .zip(&v)
                .map(|(p, v)| p * v)
                .sum();
            q[s * na + a] = mdp.reward(s, a) + gamma * next;
        }
    }
    let j = mdp.start().iter().zip(&v).map(|(d0, v)| d0 * v).sum();
    Ok(PolicyEval {
        v,
        q,
        occupancy: d.iter().copied().collect(),
        j,
        n_actions: na,
    })
}
