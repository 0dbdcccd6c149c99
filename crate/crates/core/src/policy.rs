//! Softmax policies and the exact policy gradient.

use serde::{Deserialize, Serialize};

use crate::divergence::log_sum_exp;
use crate::mdp::{evaluate_policy, PolicyEval, PolicyTable, TabularMdp};
use crate::{Error, Result};

/// How logits are attached to states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMode {
    /// One logit per `(s, a)`.
    Tabular,
    /// One logit per action, shared by every state.
    Shared,
}

/// Softmax policy `π_θ(a|s) ∝ exp(θ_{s,a})` (tabular) or `∝ exp(θ_a)` (shared).
///
/// Logits are stored as given; no centering is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyDocument", into = "PolicyDocument")]
pub struct SoftmaxPolicy {
    mode: ParamMode,
    n_states: usize,
    n_actions: usize,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyDocument {
    mode: ParamMode,
    n_states: usize,
    n_actions: usize,
    theta: Vec<f64>,
}

impl TryFrom<PolicyDocument> for SoftmaxPolicy {
    type Error = Error;

    fn try_from(doc: PolicyDocument) -> Result<Self> {
        SoftmaxPolicy::from_logits(doc.mode, doc.n_states, doc.n_actions, doc.theta)
    }
}

impl From<SoftmaxPolicy> for PolicyDocument {
    fn from(p: SoftmaxPolicy) -> Self {
        PolicyDocument {
            mode: p.mode,
            n_states: p.n_states,
            n_actions: p.n_actions,
            theta: p.theta,
        }
    }
}

/// Probability floor used when a target distribution has exact zeros and
/// must be written as logits.
pub const LOGIT_PROB_FLOOR: f64 = 1e-300;

fn n_params(mode: ParamMode, n_states: usize, n_actions: usize) -> usize {
    match mode {
        ParamMode::Tabular => n_states * n_actions,
        ParamMode::Shared => n_actions,
    }
}

impl SoftmaxPolicy {
    /// All-zero logits, i.e. the uniform policy.
    pub fn uniform(mode: ParamMode, n_states: usize, n_actions: usize) -> Self {
        SoftmaxPolicy {
            mode,
            n_states,
            n_actions,
            theta: vec![0.0; n_params(mode, n_states, n_actions)],
        }
    }

    pub fn from_logits(
        mode: ParamMode,
        n_states: usize,
        n_actions: usize,
        theta: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidPolicy("empty state or action set".into()));
        }
        let expected = n_params(mode, n_states, n_actions);
        if theta.len() != expected {
            return Err(Error::InvalidPolicy(format!(
                "{mode:?} policy needs {expected} logits, got {}",
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPolicy("non-finite logit".into()));
        }
        Ok(SoftmaxPolicy {
            mode,
            n_states,
            n_actions,
            theta,
        })
    }

    /// Tabular policy whose logits are `log max(p, floor)` of `table`.
    pub fn tabular_from_table(table: &PolicyTable, floor: f64) -> Self {
        let theta = table.as_slice().iter().map(|p| p.max(floor).ln()).collect();
        SoftmaxPolicy {
            mode: ParamMode::Tabular,
            n_states: table.n_states(),
            n_actions: table.n_actions(),
            theta,
        }
    }

    /// Shared policy playing `probs` in every state (zeros clamped to `floor`).
    pub fn shared_from_probs(n_states: usize, probs: &[f64], floor: f64) -> Result<Self> {
        let theta = probs.iter().map(|p| p.max(floor).ln()).collect();
        Self::from_logits(ParamMode::Shared, n_states, probs.len(), theta)
    }

    pub fn mode(&self) -> ParamMode {
        self.mode
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::from_logits(self.mode, self.n_states, self.n_actions, theta)
    }

    /// Logits governing state `s`.
    pub fn logits(&self, s: usize) -> &[f64] {
        match self.mode {
            ParamMode::Tabular => &self.theta[s * self.n_actions..(s + 1) * self.n_actions],
            ParamMode::Shared => &self.theta,
        }
    }

    /// Index of the parameter holding the logit of `(s, a)`.
    pub fn param_index(&self, s: usize, a: usize) -> usize {
        match self.mode {
            ParamMode::Tabular => s * self.n_actions + a,
            ParamMode::Shared => a,
        }
    }

    /// `log π(·|s)`.
    pub fn log_probs(&self, s: usize) -> Vec<f64> {
        let logits = self.logits(s);
        let lse = log_sum_exp(logits);
        logits.iter().map(|l| l - lse).collect()
    }

    /// `π(·|s)`, strictly positive.
    pub fn action_probs(&self, s: usize) -> Vec<f64> {
        let logits = self.logits(s);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }

    /// `log π(a|s)` for every state, row-major.
    pub fn log_prob_table(&self) -> Vec<f64> {
        match self.mode {
            ParamMode::Tabular => (0..self.n_states).flat_map(|s| self.log_probs(s)).collect(),
            ParamMode::Shared => self.log_probs(0).repeat(self.n_states),
        }
    }

    pub fn table(&self) -> PolicyTable {
        let probs = (0..self.n_states)
            .flat_map(|s| self.action_probs(s))
            .collect();
        PolicyTable::new(self.n_states, self.n_actions, probs)
            .expect("softmax rows are distributions")
    }

    /// `∂ log π(a|s) / ∂θ`.
    pub fn log_prob_grad(&self, s: usize, a: usize) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params()];
        let mut coef = vec![0.0; self.n_actions];
        coef[a] = 1.0;
        self.add_score(&mut grad, s, &coef, &self.action_probs(s));
        grad
    }

    /// Adds `Σ_a c_a ∂ log π(a|s)/∂θ` into `grad`, given `probs = π(·|s)`.
    ///
    /// For a softmax, `∂ log π(a|s)/∂θ_{s,b} = 1[a = b] − π(b|s)`.
    pub fn add_score(&self, grad: &mut [f64], s: usize, coef: &[f64], probs: &[f64]) {
        let total: f64 = coef.iter().sum();
        for b in 0..self.n_actions {
            grad[self.param_index(s, b)] += coef[b] - total * probs[b];
        }
    }

    /// `Σ_{s,a} c(s,a) ∂ log π(a|s)/∂θ` for a row-major coefficient table.
    pub fn score_gradient(&self, coef: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params()];
        for s in 0..self.n_states {
            let row = &coef[s * self.n_actions..(s + 1) * self.n_actions];
            if row.iter().all(|c| *c == 0.0) {
                continue;
            }
            self.add_score(&mut grad, s, row, &self.action_probs(s));
        }
        grad
    }
}

/// `Σ_s d(s) Σ_a π(a|s) Q(s,a) ∂ log π(a|s)/∂θ` from a precomputed evaluation.
pub fn policy_gradient_from(policy: &SoftmaxPolicy, eval: &PolicyEval) -> Vec<f64> {
    let na = policy.n_actions();
    let mut coef = vec![0.0; policy.n_states() * na];
    for s in 0..policy.n_states() {
        let probs = policy.action_probs(s);
        for a in 0..na {
            coef[s * na + a] = eval.occupancy[s] * probs[a] * eval.q(s, a);
        }
    }
    policy.score_gradient(&coef)
}

/// Exact gradient of `J(π_θ)` by the policy gradient theorem.
pub fn policy_gradient(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<Vec<f64>> {
    let eval = evaluate_policy(mdp, &policy.table())?;
    Ok(policy_gradient_from(policy, &eval))
}

/// `J(π_θ)`.
pub fn expected_return(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<f64> {
    Ok(evaluate_policy(mdp, &policy.table())?.j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_random_mdp;
    use proptest::prelude::*;

    fn policy_with(mode: ParamMode, ns: usize, na: usize, seed: u64) -> SoftmaxPolicy {
        let n = n_params(mode, ns, na);
        let theta = (0..n)
            .map(|i| (((i as u64 + 1) * 2654435761 + seed * 97) % 1000) as f64 / 250.0 - 2.0)
            .collect();
        SoftmaxPolicy::from_logits(mode, ns, na, theta).unwrap()
    }

    #[test]
    fn zero_logits_are_uniform() {
        let p = SoftmaxPolicy::uniform(ParamMode::Tabular, 3, 4);
        for s in 0..3 {
            assert_eq!(p.action_probs(s), vec![0.25; 4]);
        }
    }

    #[test]
    fn shared_mode_is_state_independent() {
        let p = policy_with(ParamMode::Shared, 5, 3, 1);
        let first = p.action_probs(0);
        for s in 1..5 {
            assert_eq!(p.action_probs(s), first);
        }
    }

    #[test]
    fn gauge_invariance() {
        let p = policy_with(ParamMode::Tabular, 2, 3, 4);
        let shifted = p
            .with_theta(p.theta().iter().map(|t| t + 17.5).collect())
            .unwrap();
        for s in 0..2 {
            for (a, b) in p.action_probs(s).iter().zip(shifted.action_probs(s)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_score_closed_form() {
        let p = SoftmaxPolicy::uniform(ParamMode::Shared, 1, 4);
        assert_eq!(p.log_prob_grad(0, 2), vec![-0.25, -0.25, 0.75, -0.25]);
        let t = SoftmaxPolicy::uniform(ParamMode::Tabular, 2, 2);
        assert_eq!(t.log_prob_grad(1, 0), vec![0.0, 0.0, 0.5, -0.5]);
    }

    #[test]
    fn score_has_zero_mean() {
        for mode in [ParamMode::Tabular, ParamMode::Shared] {
            let p = policy_with(mode, 3, 4, 9);
            for s in 0..3 {
                let probs = p.action_probs(s);
                let mut mean = vec![0.0; p.n_params()];
                for a in 0..4 {
                    for (m, g) in mean.iter_mut().zip(p.log_prob_grad(s, a)) {
                        *m += probs[a] * g;
                    }
                }
                assert!(mean.iter().all(|m| m.abs() < 1e-15));
            }
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let h = 1e-6;
        for mode in [ParamMode::Tabular, ParamMode::Shared] {
            let p = policy_with(mode, 3, 3, 2);
            for s in 0..3 {
                for a in 0..3 {
                    let grad = p.log_prob_grad(s, a);
                    for i in 0..p.n_params() {
                        let mut up = p.theta().to_vec();
                        let mut down = p.theta().to_vec();
                        up[i] += h;
                        down[i] -= h;
                        let fd = (p.with_theta(up).unwrap().log_probs(s)[a]
                            - p.with_theta(down).unwrap().log_probs(s)[a])
                            / (2.0 * h);
                        assert!((fd - grad[i]).abs() < 1e-7, "{mode:?} {s} {a} {i}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_rewards_zero_gradient() {
        let mdp = build_random_mdp(4, 3, 1.0, 5).unwrap();
        let p = policy_with(ParamMode::Tabular, 4, 3, 5);
        assert!(policy_gradient(&mdp, &p).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let p = policy_with(ParamMode::Shared, 4, 3, 3);
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"mode\":\"shared\""));
        let back: SoftmaxPolicy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"mode":"tabular","n_states":2,"n_actions":2,"theta":[0.0]}"#;
        assert!(serde_json::from_str::<SoftmaxPolicy>(bad).is_err());
    }

    proptest! {
        #[test]
        fn rows_are_positive_distributions(theta in prop::collection::vec(-30.0f64..30.0, 6)) {
            let p = SoftmaxPolicy::from_logits(ParamMode::Tabular, 2, 3, theta).unwrap();
            for s in 0..2 {
                let probs = p.action_probs(s);
                prop_assert!(probs.iter().all(|x| *x > 0.0));
                prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
