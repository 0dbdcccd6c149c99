use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{improve, project, ImprovementSpec, ProjectionOutcome, ProjectionSpec};
use crate::bounds::operator_lower_bound;
use crate::mdp::{evaluate_policy, PolicyEval, PolicyTable, TabularMdp};
use crate::policy::SoftmaxPolicy;
use crate::{Error, Result};

/// What one improvement-then-projection step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub j_before: f64,
    pub j_after: f64,
    /// Operator lower bound around the old policy, evaluated at the new one.
    pub bound_at_new: f64,
    /// Projection objective at the starting policy.
    pub divergence_before: f64,
    /// Projection objective at the returned policy.
    pub divergence_after: f64,
    pub projection_steps: usize,
}

/// `P(I(π))` for the current policy.
pub fn compose_step(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    improvement: &ImprovementSpec,
    projection: &ProjectionSpec,
) -> Result<(SoftmaxPolicy, StepDiagnostics)> {
    let table = policy.table();
    let eval = evaluate_policy(mdp, &table)?;
    let mu = improve(&eval, &table, improvement)?;
    let outcome = project(&mu, projection, policy)?;
    let new_table = outcome.policy.table();
    let j_after = evaluate_policy(mdp, &new_table)?.j;
    let diagnostics = StepDiagnostics {
        j_before: eval.j,
        j_after,
        bound_at_new: operator_lower_bound(&eval, &table, &new_table)?,
        divergence_before: outcome.initial_objective,
        divergence_after: outcome.final_objective,
        projection_steps: outcome.steps,
    };
    Ok((outcome.policy, diagnostics))
}

/// Result of the α line search.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    /// Projection for the chosen α.
    pub projection: ProjectionOutcome,
    /// Bound value `L_μ(P I^α μ)` for the chosen α.
    pub bound: f64,
    /// `(α, L_μ(P I^α μ) − J(μ))` for every candidate tried, α = 1 first.
    pub gains: Vec<(f64, f64)>,
}

/// Picks the smallest candidate `α` whose projected polynomial improvement
/// gains at least half of what `α = 1` gains on the operator bound around
/// the current policy `mu`.
///
/// The bound is the one being maximized, so "gain" is
/// `L_μ(P I^α μ) − L_μ(μ)`. `α = 1` always qualifies.
pub fn line_search_alpha(
    mdp: &TabularMdp,
    mu: &SoftmaxPolicy,
    candidates: &[f64],
    projection: &ProjectionSpec,
) -> Result<LineSearchOutcome> {
    let table = mu.table();
    let eval = evaluate_policy(mdp, &table)?;
    line_search_with(mu, &table, &eval, (&eval, &table), candidates, projection)
}

fn check_candidates(candidates: &[f64]) -> Result<Vec<f64>> {
    if !candidates.contains(&1.0) {
        return Err(Error::InvalidSpec(
            "line search candidates must contain 1.0".into(),
        ));
    }
    if candidates.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(Error::InvalidSpec(
            "line search candidates must lie in (0, 1]".into(),
        ));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(sorted)
}

fn line_search_with(
    mu: &SoftmaxPolicy,
    table: &PolicyTable,
    eval: &PolicyEval,
    source: (&PolicyEval, &PolicyTable),
    candidates: &[f64],
    projection: &ProjectionSpec,
) -> Result<LineSearchOutcome> {
    let sorted = check_candidates(candidates)?;
    let attempt = |alpha: f64| -> Result<(ProjectionOutcome, f64)> {
        let improved = improve(source.0, source.1, &polynomial(alpha))?;
        let outcome = project(&improved, &projection.with_alpha(alpha), mu)?;
        let bound = operator_lower_bound(eval, table, &outcome.policy.table())?;
        Ok((outcome, bound))
    };
    let (full, full_bound) = attempt(1.0)?;
    let full_gain = full_bound - eval.j;
    let mut gains = vec![(1.0, full_gain)];
    for &alpha in sorted.iter().filter(|a| **a < 1.0) {
        let (outcome, bound) = attempt(alpha)?;
        let gain = bound - eval.j;
        gains.push((alpha, gain));
        if gain >= 0.5 * full_gain {
            return Ok(LineSearchOutcome {
                alpha,
                projection: outcome,
                bound,
                gains,
            });
        }
    }
    Ok(LineSearchOutcome {
        alpha: 1.0,
        projection: full,
        bound: full_bound,
        gains,
    })
}

fn polynomial(alpha: f64) -> ImprovementSpec {
    if alpha == 1.0 {
        ImprovementSpec::OpReinforce
    } else {
        ImprovementSpec::Polynomial {
            inv_alpha: 1.0 / alpha,
        }
    }
}

/// How `α` evolves over training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alphas", rename_all = "snake_case")]
pub enum AlphaSchedule {
    /// Use the improvement and projection specs unchanged.
    Fixed,
    /// Iteration `t` uses `alphas[min(t, len − 1)]`.
    Anneal(Vec<f64>),
    /// Choose `α` each iteration by [`line_search_alpha`].
    LineSearch(Vec<f64>),
}

/// Where improvement targets come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// The policy being trained.
    Current,
    /// A fixed behaviour policy, without importance correction.
    Fixed(PolicyTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub improvement: ImprovementSpec,
    pub projection: ProjectionSpec,
    pub n_iters: usize,
    pub schedule: AlphaSchedule,
    pub sampling: Sampling,
    /// Fill the wallclock column; off by default so outputs are reproducible
    /// byte for byte.
    pub record_wallclock: bool,
}

impl TrainSpec {
    pub fn new(improvement: ImprovementSpec, projection: ProjectionSpec, n_iters: usize) -> Self {
        TrainSpec {
            improvement,
            projection,
            n_iters,
            schedule: AlphaSchedule::Fixed,
            sampling: Sampling::Current,
            record_wallclock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.improvement.validate()?;
        self.projection.validate()?;
        if self.n_iters == 0 {
            return Err(Error::InvalidSpec("n_iters must be at least 1".into()));
        }
        match &self.schedule {
            AlphaSchedule::Fixed => {}
            AlphaSchedule::Anneal(alphas) => {
                if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
                    return Err(Error::InvalidSpec(
                        "anneal schedule needs alphas in (0, 1]".into(),
                    ));
                }
            }
            AlphaSchedule::LineSearch(candidates) => {
                check_candidates(candidates)?;
            }
        }
        Ok(())
    }
}

/// One learning-curve row. Row `t` describes the update from `π_t` to
/// `π_{t+1}`: `j` is `J(π_{t+1})`, `bound_at_mu` is `J(π_t)` and
/// `bound_at_new` is the operator bound around `π_t` at `π_{t+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub alpha: f64,
    pub bound_at_mu: f64,
    pub bound_at_new: f64,
    pub divergence_to_target: f64,
    pub wallclock_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub curve: Vec<CurveRow>,
    pub policy: SoftmaxPolicy,
    /// `J` of the starting policy.
    pub initial_j: f64,
}

/// Runs `spec.n_iters` composed updates from `init`.
pub fn train(mdp: &TabularMdp, init: &SoftmaxPolicy, spec: &TrainSpec) -> Result<TrainResult> {
    spec.validate()?;
    let start = Instant::now();
    let fixed_source = match &spec.sampling {
        Sampling::Current => None,
        Sampling::Fixed(table) => Some((evaluate_policy(mdp, table)?, table.clone())),
    };
    let mut policy = init.clone();
    let mut table = policy.table();
    let mut eval = evaluate_policy(mdp, &table)?;
    let initial_j = eval.j;
    let mut curve = Vec::with_capacity(spec.n_iters);
    for t in 0..spec.n_iters {
        let source = match &fixed_source {
            Some((e, tb)) => (e, tb),
            None => (&eval, &table),
        };
        let (alpha, outcome, bound) = match &spec.schedule {
            AlphaSchedule::LineSearch(candidates) => {
                let found =
                    line_search_with(&policy, &table, &eval, source, candidates, &spec.projection)?;
                (found.alpha, found.projection, found.bound)
            }
            schedule => {
                let (improvement, projection, alpha) = match schedule {
                    AlphaSchedule::Anneal(alphas) => {
                        let alpha = alphas[t.min(alphas.len() - 1)];
                        (polynomial(alpha), spec.projection.with_alpha(alpha), alpha)
                    }
                    _ => (spec.improvement, spec.projection, reported_alpha(spec)),
                };
                let improved = improve(source.0, source.1, &improvement)?;
                let outcome = project(&improved, &projection, &policy)?;
                let bound = operator_lower_bound(&eval, &table, &outcome.policy.table())?;
                (alpha, outcome, bound)
            }
        };
        let j_before = eval.j;
        policy = outcome.policy;
        table = policy.table();
        eval = evaluate_policy(mdp, &table)?;
        let row = CurveRow {
            iteration: t,
            j: eval.j,
            alpha,
            bound_at_mu: j_before,
            bound_at_new: bound,
            divergence_to_target: outcome.final_objective,
            wallclock_ms: if spec.record_wallclock {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        log::debug!("iteration {t}: J = {:.6}, alpha = {alpha}", row.j);
        curve.push(row);
    }
    Ok(TrainResult {
        curve,
        policy,
        initial_j,
    })
}

/// α reported for a fixed schedule: the polynomial order if there is one,
/// else the α-divergence order, else 1.
fn reported_alpha(spec: &TrainSpec) -> f64 {
    if let Some(alpha) = spec.improvement.alpha() {
        return alpha;
    }
    match spec.projection.kind {
        super::Divergence::AlphaDivergence { alpha } => alpha,
        _ => 1.0,
    }
}
