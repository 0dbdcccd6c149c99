//! Exhaustive finite-horizon trajectory ensembles.
//!
//! A trajectory here is the sequence `(s_0, a_0), …, (s_{H-1}, a_{H-1})`
//! with return `Σ_t γ^t r(s_t, a_t)`. On an MDP whose episodes are absorbed
//! within `H` steps the truncated return is the full return, and otherwise
//! the truncation error is at most `γ^H R_max / (1 − γ)`.
//!
//! Ensembles are listed in lexicographic order of their `(s, a)` indices, so
//! all trajectories sharing a prefix are contiguous.

use std::io::Write;

use crate::divergence::kl;
use crate::mdp::{PolicyTable, TabularMdp};
use crate::{Error, Result};

/// Largest ensemble [`enumerate`] will build.
pub const MAX_TRAJECTORIES: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
    /// Undiscounted per-step rewards `r(s_t, a_t)`.
    pub rewards: Vec<f64>,
    /// Discounted return.
    pub ret: f64,
}

/// A finite set of trajectories with a weight on each and the weight of
/// every prefix.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    horizon: usize,
    gamma: f64,
    trajectories: Vec<Trajectory>,
    probs: Vec<f64>,
    /// `prefix[i * H + h]` is the mass of the length-`h + 1` prefix of
    /// trajectory `i`.
    prefix: Vec<f64>,
}

struct Walker<'a> {
    mdp: &'a TabularMdp,
    policy: &'a PolicyTable,
    horizon: usize,
    limit: usize,
    steps: Vec<(usize, usize)>,
    rewards: Vec<f64>,
    prefix_stack: Vec<f64>,
    out: TrajectoryEnsemble,
}

impl Walker<'_> {
    /// Extends the current partial trajectory from state `s` reached with
    /// mass `mass`.
    fn visit(&mut self, s: usize, mass: f64) -> Result<()> {
        let depth = self.steps.len();
        for a in 0..self.mdp.n_actions() {
            let pa = self.policy.get(s, a);
            if pa == 0.0 {
                continue;
            }
            let with_action = mass * pa;
            self.steps.push((s, a));
            self.rewards.push(self.mdp.reward(s, a));
            self.prefix_stack.push(with_action);
            if depth + 1 == self.horizon {
                self.emit(with_action)?;
            } else {
                let next = self.mdp.transition(s, a);
                for (s2, &p) in next.iter().enumerate() {
                    if p > 0.0 {
                        self.visit(s2, with_action * p)?;
                    }
                }
            }
            self.steps.pop();
            self.rewards.pop();
            self.prefix_stack.pop();
        }
        Ok(())
    }

    fn emit(&mut self, prob: f64) -> Result<()> {
        if self.out.trajectories.len() >= self.limit {
            return Err(Error::EnumerationLimit { limit: self.limit });
        }
        let gamma = self.mdp.gamma();
        let ret = discounted(&self.rewards, gamma);
        self.out.trajectories.push(Trajectory {
            steps: self.steps.clone(),
            rewards: self.rewards.clone(),
            ret,
        });
        self.out.probs.push(prob);
        self.out.prefix.extend_from_slice(&self.prefix_stack);
        Ok(())
    }
}

fn discounted(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Enumerates every positive-probability trajectory of length `horizon`
/// under `policy`.
pub fn enumerate(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    horizon: usize,
) -> Result<TrajectoryEnsemble> {
    enumerate_with_limit(mdp, policy, horizon, MAX_TRAJECTORIES)
}

pub fn enumerate_with_limit(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    horizon: usize,
    limit: usize,
) -> Result<TrajectoryEnsemble> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidPolicy(
            "policy shape does not match the MDP".into(),
        ));
    }
    let mut walker = Walker {
        mdp,
        policy,
        horizon,
        limit,
        steps: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        prefix_stack: Vec::with_capacity(horizon),
        out: TrajectoryEnsemble {
            horizon,
            gamma: mdp.gamma(),
            trajectories: Vec::new(),
            probs: Vec::new(),
            prefix: Vec::new(),
        },
    };
    for (s0, &p0) in mdp.start().iter().enumerate() {
        if p0 > 0.0 {
            walker.visit(s0, p0)?;
        }
    }
    Ok(walker.out)
}

impl TrajectoryEnsemble {
    /// Builds an ensemble over `trajectories` with arbitrary nonnegative
    /// weights; prefix masses are obtained by summing contiguous groups.
    pub fn from_weights(
        trajectories: Vec<Trajectory>,
        weights: Vec<f64>,
        horizon: usize,
        gamma: f64,
    ) -> Result<Self> {
        if trajectories.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "one weight per trajectory required".into(),
            ));
        }
        if trajectories.iter().any(|t| t.steps.len() != horizon) {
            return Err(Error::InvalidArgument(
                "trajectory length differs from horizon".into(),
            ));
        }
        let prefix = grouped_prefix_mass(&trajectories, &weights, horizon);
        Ok(TrajectoryEnsemble {
            horizon,
            gamma,
            trajectories,
            probs: weights,
            prefix,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn returns(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.ret).collect()
    }

    /// Mass of the length-`len` prefix of trajectory `i` (`1 ≤ len ≤ H`).
    pub fn prefix_prob(&self, i: usize, len: usize) -> f64 {
        self.prefix[i * self.horizon + len - 1]
    }

    /// All prefix masses, row-major `[trajectory][len - 1]`.
    pub fn prefix_probs(&self) -> &[f64] {
        &self.prefix
    }

    /// Prefix masses recomputed by summing the full-trajectory weights of
    /// each contiguous prefix group.
    pub fn summed_prefix_probs(&self) -> Vec<f64> {
        grouped_prefix_mass(&self.trajectories, &self.probs, self.horizon)
    }

    /// `Σ_τ p(τ) R(τ)`.
    pub fn expected_return(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.trajectories)
            .map(|(p, t)| p * t.ret)
            .sum()
    }

    /// The same trajectories weighted by another policy on the same MDP.
    ///
    /// Trajectories outside the support of `policy` get weight 0; weights do
    /// not sum to one when `policy` reaches trajectories missing here.
    pub fn with_policy(&self, mdp: &TabularMdp, policy: &PolicyTable) -> Result<Self> {
        if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
            return Err(Error::InvalidPolicy(
                "policy shape does not match the MDP".into(),
            ));
        }
        let h = self.horizon;
        let mut probs = Vec::with_capacity(self.len());
        let mut prefix = Vec::with_capacity(self.len() * h);
        for t in &self.trajectories {
            let mut mass = mdp.start()[t.steps[0].0];
            for (k, &(s, a)) in t.steps.iter().enumerate() {
                if k > 0 {
                    let (ps, pa) = t.steps[k - 1];
                    mass *= mdp.transition(ps, pa)[s];
                }
                mass *= policy.get(s, a);
                prefix.push(mass);
            }
            probs.push(mass);
        }
        Ok(TrajectoryEnsemble {
            horizon: h,
            gamma: self.gamma,
            trajectories: self.trajectories.clone(),
            probs,
            prefix,
        })
    }

    /// `Rπ(τ) = R(τ) π(τ) / J(π)`.
    pub fn improve_trajectory(&self) -> Result<Self> {
        for (i, t) in self.trajectories.iter().enumerate() {
            if t.ret < 0.0 {
                return Err(Error::NegativeReturn {
                    index: i,
                    value: t.ret,
                });
            }
        }
        let j = self.expected_return();
        if !(j > 0.0) {
            return Err(Error::ZeroReturn);
        }
        let weights = self
            .probs
            .iter()
            .zip(&self.trajectories)
            .map(|(p, t)| p * t.ret / j)
            .collect();
        self.reweighted(weights)
    }

    /// Weights proportional to `f(R(τ)) π(τ)`; `f` must be positive on every
    /// observed return.
    pub fn improve_trajectory_transformed(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut weights = Vec::with_capacity(self.len());
        for (i, (p, t)) in self.probs.iter().zip(&self.trajectories).enumerate() {
            let fx = f(t.ret);
            if !(fx > 0.0 && fx.is_finite()) {
                return Err(Error::NonPositiveTransform {
                    index: i,
                    value: fx,
                });
            }
            weights.push(p * fx);
        }
        let z: f64 = weights.iter().sum();
        if !(z > 0.0) {
            return Err(Error::ZeroReturn);
        }
        weights.iter_mut().for_each(|w| *w /= z);
        self.reweighted(weights)
    }

    fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        Self::from_weights(self.trajectories.clone(), weights, self.horizon, self.gamma)
    }

    /// Writes one CSV row per trajectory: the `s:a` sequence, its weight and
    /// its return.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["trajectory", "probability", "return"])?;
        for (t, p) in self.trajectories.iter().zip(&self.probs) {
            let seq: Vec<String> = t.steps.iter().map(|(s, a)| format!("{s}:{a}")).collect();
            out.write_record([seq.join(" "), p.to_string(), t.ret.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn grouped_prefix_mass(trajectories: &[Trajectory], weights: &[f64], horizon: usize) -> Vec<f64> {
    let n = trajectories.len();
    let mut prefix = vec![0.0; n * horizon];
    for len in 1..=horizon {
        let mut start = 0;
        while start < n {
            let key = &trajectories[start].steps[..len];
            let mut end = start;
            let mut mass = 0.0;
            while end < n && trajectories[end].steps[..len] == *key {
                mass += weights[end];
                end += 1;
            }
            for i in start..end {
                prefix[i * horizon + len - 1] = mass;
            }
            start = end;
        }
    }
    prefix
}

/// `KL(p ‖ q)` between two weightings of the same trajectory list.
pub fn kl_trajectories(p: &[f64], q: &[f64]) -> Result<f64> {
    kl(p, q)
}

/// `J(μ) (1 − KL(Rμ ‖ π) + KL(Rμ ‖ μ))`, a lower bound on `J(π)`.
///
/// `pi_probs` are the weights `π(τ)` of `mu`'s trajectories.
pub fn lower_bound_trajectory(mu: &TrajectoryEnsemble, pi_probs: &[f64]) -> Result<f64> {
    let improved = mu.improve_trajectory()?;
    let j_mu = mu.expected_return();
    let to_pi = kl(improved.probs(), pi_probs)?;
    let to_mu = kl(improved.probs(), mu.probs())?;
    Ok(j_mu * (1.0 - to_pi + to_mu))
}

/// `J_μ(π) = Σ_τ μ(τ) Σ_h γ^h r(s_h, a_h) (1 + log(π_h(τ_h) / μ_h(τ_h)))`.
///
/// `pi_prefix` holds `π_h` for `mu`'s trajectories in the layout of
/// [`TrajectoryEnsemble::prefix_probs`].
pub fn j_mu_bound(mu: &TrajectoryEnsemble, pi_prefix: &[f64]) -> Result<f64> {
    let h = mu.horizon();
    if pi_prefix.len() != mu.len() * h {
        return Err(Error::InvalidArgument(
            "prefix table has the wrong size".into(),
        ));
    }
    let mut total = 0.0;
    for (i, (t, &p)) in mu.trajectories().iter().zip(mu.probs()).enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut disc = 1.0;
        let mut sum = 0.0;
        for (k, &r) in t.rewards.iter().enumerate() {
            if r != 0.0 {
                let pi_h = pi_prefix[i * h + k];
                let mu_h = mu.prefix_prob(i, k + 1);
                if pi_h <= 0.0 {
                    return Err(Error::Support(format!(
                        "prefix {} of trajectory {i} has no mass under π",
                        k + 1
                    )));
                }
                sum += disc * r * (1.0 + (pi_h / mu_h).ln());
            }
            disc *= mu.gamma();
        }
        total += p * sum;
    }
    Ok(total)
}
