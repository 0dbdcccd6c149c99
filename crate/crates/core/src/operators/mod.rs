//! Improvement and projection operators in the state-action formulation.
//!
//! An improvement operator maps a policy to an [`ImprovedDistribution`]: a
//! weight on every state together with a target action distribution in that
//! state. A projection operator then finds the member of a policy class
//! closest to that target under some divergence. Composing the two gives an
//! update rule; REINFORCE, PPO and MPO style updates are all of this form.

mod compose;
mod projection;

pub use compose::{
    compose_step, line_search_alpha, train, AlphaSchedule, CurveRow, LineSearchOutcome, Sampling,
    StepDiagnostics, TrainResult, TrainSpec,
};
pub use projection::{
    minka_kl_iteration, project, Divergence, ProjectionOutcome, ProjectionProblem, ProjectionSpec,
    Solver, DEFAULT_CLIP_EPS, DEFAULT_GD_STEPS, DEFAULT_GD_STEP_SIZE,
};

use serde::{Deserialize, Serialize};

use crate::divergence::log_sum_exp;
use crate::mdp::{PolicyEval, PolicyTable};
use crate::{Error, Result};

/// States whose value is at or below this floor are left untouched by every
/// improvement operator.
pub const VALUE_FLOOR: f64 = 1e-12;

/// `Q` values in `[-Q_NEGATIVE_SLACK, 0)` are treated as solver noise and
/// clamped to zero; anything more negative is an error.
pub const Q_NEGATIVE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImprovementSpec {
    /// `μ ∝ Q π`, state weights `∝ d V`.
    OpReinforce,
    /// `μ ∝ π Q^k` with `k = inv_alpha`, state weights `∝ d Σ_a π Q^k`.
    Polynomial { inv_alpha: f64 },
    /// `μ ∝ exp(β Q)`, state weights `∝ d`.
    PpoExp { beta: f64 },
    /// `μ ∝ π exp(β Q)`, state weights `∝ d`.
    MpoExp { beta: f64 },
}

impl ImprovementSpec {
    pub fn validate(&self) -> Result<()> {
        let (name, value) = match *self {
            ImprovementSpec::OpReinforce => return Ok(()),
            ImprovementSpec::Polynomial { inv_alpha } => ("inv_alpha", inv_alpha),
            ImprovementSpec::PpoExp { beta } | ImprovementSpec::MpoExp { beta } => ("beta", beta),
        };
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "{name} must be positive and finite, got {value}"
            )))
        }
    }

    /// The `α` this operator corresponds to in the polynomial family, if any.
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            ImprovementSpec::OpReinforce => Some(1.0),
            ImprovementSpec::Polynomial { inv_alpha } => Some(1.0 / inv_alpha),
            _ => None,
        }
    }

    fn needs_positive_q(&self) -> bool {
        matches!(
            self,
            ImprovementSpec::OpReinforce | ImprovementSpec::Polynomial { .. }
        )
    }
}

/// Output of an improvement operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovedDistribution {
    /// Normalized state weights `w(s)`.
    pub state_weights: Vec<f64>,
    /// Target conditionals `μ(·|s)`.
    pub conditionals: PolicyTable,
    /// `log` of the unnormalized state weight; `-inf` on untouched states.
    pub log_state_mass: Vec<f64>,
    /// `log Σ_a` of the unnormalized per-state action measure (`log Z(s)`
    /// for the polynomial family, 0 for the exponential operators).
    pub log_action_mass: Vec<f64>,
    /// States at or below [`VALUE_FLOOR`], which keep the source conditional.
    pub untouched: Vec<bool>,
    pub spec: ImprovementSpec,
}

impl ImprovedDistribution {
    pub fn n_states(&self) -> usize {
        self.state_weights.len()
    }

    /// Unnormalized state weights `exp(log_state_mass)`.
    pub fn state_mass(&self) -> Vec<f64> {
        self.log_state_mass.iter().map(|l| l.exp()).collect()
    }

    /// State weights matched to an α-divergence projection: `∝ d Z^α` for
    /// the polynomial family. `α = 1` gives [`Self::state_weights`].
    pub fn alpha_weights(&self, alpha: f64) -> Vec<f64> {
        let logs: Vec<f64> = self
            .log_state_mass
            .iter()
            .zip(&self.log_action_mass)
            .map(|(m, z)| {
                if *m == f64::NEG_INFINITY {
                    *m
                } else {
                    m + (alpha - 1.0) * z
                }
            })
            .collect();
        normalize_log_weights(&logs)
    }
}

fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

/// Applies an improvement operator to `pi`, whose exact evaluation is `eval`.
pub fn improve(
    eval: &PolicyEval,
    pi: &PolicyTable,
    spec: &ImprovementSpec,
) -> Result<ImprovedDistribution> {
    spec.validate()?;
    let (ns, na) = (pi.n_states(), pi.n_actions());
    if eval.n_states() != ns || eval.n_actions() != na {
        return Err(Error::InvalidPolicy(
            "evaluation and policy shapes differ".into(),
        ));
    }
    let mut conditionals = pi.as_slice().to_vec();
    let mut log_state_mass = vec![f64::NEG_INFINITY; ns];
    let mut log_action_mass = vec![0.0; ns];
    let mut untouched = vec![true; ns];
    let mut logf = vec![0.0; na];
    for s in 0..ns {
        if eval.v[s] <= VALUE_FLOOR {
            continue;
        }
        let q = eval.q_row(s);
        let probs = pi.row(s);
        for a in 0..na {
            let mut qa = q[a];
            if spec.needs_positive_q() && qa < 0.0 {
                if qa < -Q_NEGATIVE_SLACK {
                    return Err(Error::NegativeQ {
                        state: s,
                        action: a,
                        value: qa,
                    });
                }
                qa = 0.0;
            }
            logf[a] = match *spec {
                ImprovementSpec::OpReinforce => probs[a].ln() + qa.ln(),
                ImprovementSpec::Polynomial { inv_alpha } => probs[a].ln() + inv_alpha * qa.ln(),
                ImprovementSpec::PpoExp { beta } => beta * qa,
                ImprovementSpec::MpoExp { beta } => probs[a].ln() + beta * qa,
            };
        }
        let log_z = log_sum_exp(&logf);
        let row = &mut conditionals[s * na..(s + 1) * na];
        for a in 0..na {
            row[a] = (logf[a] - log_z).exp();
        }
        let log_d = eval.occupancy[s].ln();
        match spec {
            ImprovementSpec::PpoExp { .. } | ImprovementSpec::MpoExp { .. } => {
                log_state_mass[s] = log_d;
            }
            _ => {
                log_state_mass[s] = log_d + log_z;
                log_action_mass[s] = log_z;
            }
        }
        untouched[s] = false;
    }
    if untouched.iter().all(|u| *u) {
        return Err(Error::NothingToImprove);
    }
    let state_weights = normalize_log_weights(&log_state_mass);
    let conditionals = PolicyTable::new(ns, na, renormalize_rows(conditionals, na))?;
    Ok(ImprovedDistribution {
        state_weights,
        conditionals,
        log_state_mass,
        log_action_mass,
        untouched,
        spec: *spec,
    })
}

/// Divides out the rounding left by `exp(logf - lse)`.
fn renormalize_rows(mut probs: Vec<f64>, na: usize) -> Vec<f64> {
    for row in probs.chunks_mut(na) {
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
    }
    probs
}
