use serde::{Deserialize, Serialize};

use super::ImprovedDistribution;
use crate::mdp::PolicyTable;
use crate::policy::{ParamMode, SoftmaxPolicy, LOGIT_PROB_FLOOR};
use crate::{Error, Result};

pub const DEFAULT_CLIP_EPS: f64 = 0.2;
pub const DEFAULT_GD_STEPS: usize = 500;
pub const DEFAULT_GD_STEP_SIZE: f64 = 0.1;

/// Step-size growth after an accepted gradient step.
const STEP_GROWTH: f64 = 1.25;
/// Gradient descent stops once the step size collapses below this.
const MIN_STEP: f64 = 1e-14;

fn default_clip() -> Option<f64> {
    Some(DEFAULT_CLIP_EPS)
}

/// Divergence minimized by a projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Divergence {
    /// `Σ_s c(s) KL(μ(·|s) ‖ z(·|s))`, mass covering.
    WeightedKl,
    /// `Σ_s c(s) D_α(μ(·|s) ‖ z(·|s))` with Minka's α-divergence. The state
    /// weights are `∝ d Z^α` so that the projection of the matching
    /// polynomial improvement has the optimum as a fixed point.
    AlphaDivergence { alpha: f64 },
    /// Mode seeking: maximizes the clipped surrogate
    /// `Σ_s c(s) [Σ_a π₀ min(r A, clip(r) A) + H(z) / β]` with
    /// `Q̃ = log μ`, `A = Q̃ − E_π₀ Q̃` and `r = z / π₀`. Without clipping and
    /// with `β = 1` this is `KL(z ‖ μ)` up to a constant.
    ReverseKlClipped {
        beta: f64,
        #[serde(default = "default_clip")]
        clip_eps: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solver {
    /// Exact per-state minimizer; tabular policies only.
    ClosedFormTabular,
    /// Backtracking gradient descent on the logits. `steps` counts accepted
    /// steps, so `steps = 1` is a single partial projection step.
    GradientDescent {
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_step_size")]
        step_size: f64,
    },
}

fn default_steps() -> usize {
    DEFAULT_GD_STEPS
}

fn default_step_size() -> f64 {
    DEFAULT_GD_STEP_SIZE
}

impl Default for Solver {
    fn default() -> Self {
        Solver::GradientDescent {
            steps: DEFAULT_GD_STEPS,
            step_size: DEFAULT_GD_STEP_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    #[serde(flatten)]
    pub kind: Divergence,
    #[serde(default)]
    pub solver: Solver,
}

impl ProjectionSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            Divergence::WeightedKl => {}
            Divergence::AlphaDivergence { alpha } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::InvalidSpec(format!("alpha {alpha} outside (0, 1]")));
                }
            }
            Divergence::ReverseKlClipped { beta, clip_eps } => {
                if beta.is_nan() || beta <= 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "beta must be positive, got {beta}"
                    )));
                }
                if let Some(eps) = clip_eps {
                    if !(eps > 0.0 && eps.is_finite()) {
                        return Err(Error::InvalidSpec(format!(
                            "clip_eps must be positive, got {eps}"
                        )));
                    }
                }
            }
        }
        if let Solver::GradientDescent { steps, step_size } = self.solver {
            if steps == 0 || !(step_size > 0.0 && step_size.is_finite()) {
                return Err(Error::InvalidSpec(
                    "gradient descent needs steps >= 1 and a positive step size".into(),
                ));
            }
        }
        Ok(())
    }

    /// Same solver, α-divergence order replaced by `alpha` (no-op for other
    /// divergences).
    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut out = *self;
        if let Divergence::AlphaDivergence { .. } = out.kind {
            out.kind = Divergence::AlphaDivergence { alpha };
        }
        out
    }
}

/// A fully specified projection objective over a softmax policy class.
#[derive(Debug, Clone)]
pub struct ProjectionProblem {
    pub weights: Vec<f64>,
    pub targets: PolicyTable,
    pub kind: Divergence,
    /// Reference conditionals `π₀` for the clipped surrogate.
    pub anchor: PolicyTable,
    /// Per-state centered `log μ`, used only by the reverse KL.
    advantages: Vec<f64>,
}

impl ProjectionProblem {
    /// Projection of `mu` with the weights that `kind` calls for.
    pub fn new(mu: &ImprovedDistribution, kind: Divergence, init: &SoftmaxPolicy) -> Self {
        let weights = match kind {
            Divergence::AlphaDivergence { alpha } => mu.alpha_weights(alpha),
            _ => mu.state_weights.clone(),
        };
        Self::with_weights(weights, mu.conditionals.clone(), kind, init.table())
    }

    pub fn with_weights(
        weights: Vec<f64>,
        targets: PolicyTable,
        kind: Divergence,
        anchor: PolicyTable,
    ) -> Self {
        let na = targets.n_actions();
        let mut advantages = Vec::new();
        if let Divergence::ReverseKlClipped { .. } = kind {
            advantages = vec![0.0; targets.as_slice().len()];
            for s in 0..targets.n_states() {
                let log_mu: Vec<f64> = targets
                    .row(s)
                    .iter()
                    .map(|m| m.max(LOGIT_PROB_FLOOR).ln())
                    .collect();
                let base: f64 = anchor.row(s).iter().zip(&log_mu).map(|(p, l)| p * l).sum();
                for a in 0..na {
                    advantages[s * na + a] = log_mu[a] - base;
                }
            }
        }
        ProjectionProblem {
            weights,
            targets,
            kind,
            anchor,
            advantages,
        }
    }

    /// Objective value at `z` (lower is better).
    pub fn objective(&self, z: &SoftmaxPolicy) -> f64 {
        let na = self.targets.n_actions();
        let log_table = z.log_prob_table();
        let mut total = 0.0;
        for (s, &c) in self.weights.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mu = self.targets.row(s);
            let log_z = &log_table[s * na..(s + 1) * na];
            let term = match self.kind {
                Divergence::WeightedKl | Divergence::AlphaDivergence { alpha: 1.0 } => {
                    kl_row(mu, log_z)
                }
                Divergence::AlphaDivergence { alpha } => {
                    let overlap: f64 = mu
                        .iter()
                        .zip(log_z)
                        .map(|(m, lz)| mixed_power(*m, *lz, alpha))
                        .sum();
                    (1.0 - overlap) / (alpha * (1.0 - alpha))
                }
                Divergence::ReverseKlClipped { beta, clip_eps } => {
                    let adv = &self.advantages[s * na..(s + 1) * na];
                    let pi0 = self.anchor.row(s);
                    let mut surrogate = 0.0;
                    for a in 0..na {
                        let zp = log_z[a].exp();
                        let r = zp / pi0[a];
                        let plain = r * adv[a];
                        let value = match clip_eps {
                            Some(eps) => plain.min(r.clamp(1.0 - eps, 1.0 + eps) * adv[a]),
                            None => plain,
                        };
                        surrogate += pi0[a] * value;
                        if beta.is_finite() {
                            surrogate -= zp * log_z[a] / beta;
                        }
                    }
                    -surrogate
                }
            };
            total += c * term;
        }
        total
    }

    /// Score-function coefficients `g(s, a)` such that the θ-gradient of the
    /// objective is `Σ g(s, a) ∇ log z(a|s)`.
    pub fn score_coefficients(&self, z: &SoftmaxPolicy) -> Vec<f64> {
        let na = self.targets.n_actions();
        let log_table = z.log_prob_table();
        let mut coef = vec![0.0; self.weights.len() * na];
        for (s, &c) in self.weights.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mu = self.targets.row(s);
            let log_z = &log_table[s * na..(s + 1) * na];
            let out = &mut coef[s * na..(s + 1) * na];
            match self.kind {
                Divergence::WeightedKl => {
                    for a in 0..na {
                        out[a] = -c * mu[a];
                    }
                }
                Divergence::AlphaDivergence { alpha } => {
                    for a in 0..na {
                        out[a] = -(c / alpha) * mixed_power(mu[a], log_z[a], alpha);
                    }
                }
                Divergence::ReverseKlClipped { beta, clip_eps } => {
                    let adv = &self.advantages[s * na..(s + 1) * na];
                    let pi0 = self.anchor.row(s);
                    for a in 0..na {
                        let zp = log_z[a].exp();
                        let r = zp / pi0[a];
                        let active = match clip_eps {
                            Some(eps) => {
                                let plain = r * adv[a];
                                plain <= r.clamp(1.0 - eps, 1.0 + eps) * adv[a]
                            }
                            None => true,
                        };
                        let mut g = if active { -adv[a] } else { 0.0 };
                        if beta.is_finite() {
                            g += log_z[a] / beta;
                        }
                        out[a] = c * zp * g;
                    }
                }
            }
        }
        coef
    }

    pub fn gradient(&self, z: &SoftmaxPolicy) -> Vec<f64> {
        z.score_gradient(&self.score_coefficients(z))
    }

    /// Runs `solver` from `init`.
    pub fn solve(&self, init: &SoftmaxPolicy, solver: &Solver) -> Result<ProjectionOutcome> {
        let initial = self.objective(init);
        if !initial.is_finite() {
            return Err(Error::NonFinite);
        }
        match *solver {
            Solver::ClosedFormTabular => {
                let policy = self.closed_form(init)?;
                let final_objective = self.objective(&policy);
                Ok(ProjectionOutcome {
                    policy,
                    initial_objective: initial,
                    final_objective,
                    steps: 1,
                })
            }
            Solver::GradientDescent { steps, step_size } => {
                self.descend(init, initial, steps, step_size)
            }
        }
    }

    fn closed_form(&self, init: &SoftmaxPolicy) -> Result<SoftmaxPolicy> {
        if init.mode() != ParamMode::Tabular {
            return Err(Error::InvalidSpec(
                "closed-form projection needs a tabular policy".into(),
            ));
        }
        let na = init.n_actions();
        let mut theta = init.theta().to_vec();
        for (s, &c) in self.weights.iter().enumerate() {
            if c <= 0.0 {
                continue;
            }
            let mu = self.targets.row(s);
            let logits = &mut theta[s * na..(s + 1) * na];
            match self.kind {
                // Both divergences are minimized by z = μ over the simplex.
                Divergence::WeightedKl | Divergence::AlphaDivergence { .. } => {
                    for a in 0..na {
                        logits[a] = mu[a].max(LOGIT_PROB_FLOOR).ln();
                    }
                }
                Divergence::ReverseKlClipped {
                    clip_eps: Some(_), ..
                } => {
                    return Err(Error::InvalidSpec(
                        "the clipped surrogate has no closed form, use gradient descent".into(),
                    ));
                }
                Divergence::ReverseKlClipped {
                    beta,
                    clip_eps: None,
                } if beta.is_finite() => {
                    for a in 0..na {
                        logits[a] = beta * mu[a].max(LOGIT_PROB_FLOOR).ln();
                    }
                }
                Divergence::ReverseKlClipped { .. } => {
                    let best = argmax(mu);
                    for a in 0..na {
                        logits[a] = if a == best {
                            0.0
                        } else {
                            LOGIT_PROB_FLOOR.ln()
                        };
                    }
                }
            }
        }
        init.with_theta(theta)
    }

    fn descend(
        &self,
        init: &SoftmaxPolicy,
        initial: f64,
        steps: usize,
        mut step: f64,
    ) -> Result<ProjectionOutcome> {
        let mut policy = init.clone();
        let mut value = initial;
        let mut taken = 0;
        while taken < steps && step >= MIN_STEP {
            let grad = self.gradient(&policy);
            if grad.iter().all(|g| *g == 0.0) {
                break;
            }
            loop {
                let theta: Vec<f64> = policy
                    .theta()
                    .iter()
                    .zip(&grad)
                    .map(|(t, g)| t - step * g)
                    .collect();
                let candidate = match policy.with_theta(theta) {
                    Ok(p) => p,
                    Err(_) => {
                        step *= 0.5;
                        if step < MIN_STEP {
                            break;
                        }
                        continue;
                    }
                };
                let next = self.objective(&candidate);
                if next <= value {
                    policy = candidate;
                    value = next;
                    taken += 1;
                    step *= STEP_GROWTH;
                    break;
                }
                step *= 0.5;
                if step < MIN_STEP {
                    break;
                }
            }
        }
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(ProjectionOutcome {
            policy,
            initial_objective: initial,
            final_objective: value,
            steps: taken,
        })
    }
}

/// `μ^α z^(1−α)` from `log z`, zero when `μ = 0`.
fn mixed_power(mu: f64, log_z: f64, alpha: f64) -> f64 {
    if mu == 0.0 {
        0.0
    } else {
        (alpha * mu.ln() + (1.0 - alpha) * log_z).exp()
    }
}

fn kl_row(mu: &[f64], log_z: &[f64]) -> f64 {
    mu.iter()
        .zip(log_z)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, lz)| m * (m.ln() - lz))
        .sum()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Result of a projection.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub policy: SoftmaxPolicy,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Accepted steps (1 for closed forms).
    pub steps: usize,
}

/// Projects `mu` onto the softmax class of `init`, starting from `init`.
pub fn project(
    mu: &ImprovedDistribution,
    spec: &ProjectionSpec,
    init: &SoftmaxPolicy,
) -> Result<ProjectionOutcome> {
    spec.validate()?;
    if init.n_states() != mu.n_states() || init.n_actions() != mu.conditionals.n_actions() {
        return Err(Error::InvalidPolicy(
            "initial policy shape differs from the target".into(),
        ));
    }
    ProjectionProblem::new(mu, spec.kind, init).solve(init, &spec.solver)
}

/// One step of the iterative α-projection: projects the per-state geometric
/// mixture `μ^α z^(1−α)` under the weighted KL, each state weighted by its
/// α-weight times the mixture's normalizer.
pub fn minka_kl_iteration(
    mu: &ImprovedDistribution,
    z: &SoftmaxPolicy,
    alpha: f64,
    solver: &Solver,
) -> Result<SoftmaxPolicy> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside (0, 1)"
        )));
    }
    let base = mu.alpha_weights(alpha);
    let (ns, na) = (z.n_states(), z.n_actions());
    let mut weights = vec![0.0; ns];
    let mut targets = Vec::with_capacity(ns * na);
    for s in 0..ns {
        let log_z = z.log_probs(s);
        let raw: Vec<f64> = mu
            .conditionals
            .row(s)
            .iter()
            .zip(&log_z)
            .map(|(m, lz)| mixed_power(*m, *lz, alpha))
            .collect();
        let norm: f64 = raw.iter().sum();
        if base[s] > 0.0 && norm > 0.0 {
            weights[s] = base[s] * norm;
            targets.extend(raw.iter().map(|x| x / norm));
        } else {
            targets.extend(z.action_probs(s));
        }
    }
    let targets = PolicyTable::new(ns, na, targets)?;
    let problem =
        ProjectionProblem::with_weights(weights, targets, Divergence::WeightedKl, z.table());
    Ok(problem.solve(z, solver)?.policy)
}
