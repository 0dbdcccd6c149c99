//! One-shot runner over the library's checkable properties.
//!
//! Each check reports the worst measured quantity next to its tolerance.
//! Checks run on small, seeded random instances and on the four-room
//! environment; they are a release gate rather than a test-suite substitute.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::preset;
use super::reference::class_optimum;
use super::sweep::{iterations_to_fraction, regret_stats};
use crate::bounds::{
    bound_landscape, cpi_surrogate, kl_form_lower_bound, operator_bound_gradient,
    operator_lower_bound, segment_policy, DEFAULT_ANCHORS,
};
use crate::mdp::{
    build_four_room, build_random_mdp, evaluate_policy, greedy_actions, value_iteration,
    PolicyEval, PolicyTable, TabularMdp,
};
use crate::operators::{improve, train, Divergence, ImprovementSpec, ProjectionProblem};
use crate::policy::{policy_gradient, ParamMode, SoftmaxPolicy};
use crate::trajectory::{enumerate, j_mu_bound, lower_bound_trajectory};
use crate::{Error, Result};

/// Signature of the operator lower bound, injectable for mutation testing.
pub type BoundFn = fn(&PolicyEval, &PolicyTable, &PolicyTable) -> Result<f64>;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Run only checks whose name contains this string.
    pub filter: Option<String>,
    pub operator_bound: BoundFn,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            filter: None,
            operator_bound: operator_lower_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
    pub wallclock_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
    pub total_ms: u64,
}

/// What a check measured, before timing is attached.
struct Measured {
    passed: bool,
    measured: f64,
    tolerance: f64,
    detail: String,
}

impl Measured {
    /// Passes when `measured ≤ tolerance`.
    fn at_most(measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Measured {
            passed: measured <= tolerance,
            measured,
            tolerance,
            detail: detail.into(),
        }
    }
}

type Check = fn(&VerifyOptions) -> Result<Measured>;

const CHECKS: [(&str, Check); 13] = [
    ("policy_gradient_finite_difference", check_policy_gradient),
    ("kl_gradient_identity", check_kl_gradient_identity),
    (
        "trajectory_improvement_identity",
        check_improvement_identity,
    ),
    ("trajectory_transform_identity", check_transform_identity),
    ("operator_bound_validity", check_bound_validity),
    ("kl_form_equivalence", check_kl_form),
    ("cpi_is_not_a_bound", check_cpi_violation),
    ("trajectory_bounds", check_trajectory_bounds),
    ("fixed_point", check_fixed_point),
    ("greedification", check_greedification),
    ("offpolicy_optimal", check_offpolicy),
    ("landscape_tangency", check_landscape),
    ("fig1_ordering", check_fig1),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs the selected checks. Errors inside a check are reported as failures.
pub fn verify(options: &VerifyOptions) -> VerifyReport {
    let start = Instant::now();
    let mut checks = Vec::new();
    for (name, check) in CHECKS {
        if let Some(filter) = &options.filter {
            if !name.contains(filter.as_str()) {
                continue;
            }
        }
        let t = Instant::now();
        let outcome = match check(options) {
            Ok(m) => CheckOutcome {
                name: name.into(),
                passed: m.passed,
                measured: m.measured,
                tolerance: m.tolerance,
                detail: m.detail,
                wallclock_ms: 0,
            },
            Err(err) => CheckOutcome {
                name: name.into(),
                passed: false,
                measured: f64::NAN,
                tolerance: f64::NAN,
                detail: format!("error: {err}"),
                wallclock_ms: 0,
            },
        };
        let outcome = CheckOutcome {
            wallclock_ms: t.elapsed().as_millis() as u64,
            ..outcome
        };
        log::info!(
            "{}: {}",
            outcome.name,
            if outcome.passed { "pass" } else { "FAIL" }
        );
        checks.push(outcome);
    }
    VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
        total_ms: start.elapsed().as_millis() as u64,
    }
}

fn random_policy(
    rng: &mut ChaCha8Rng,
    mode: ParamMode,
    ns: usize,
    na: usize,
    scale: f64,
) -> SoftmaxPolicy {
    let normal = Normal::new(0.0, scale).expect("valid scale");
    let n = if mode == ParamMode::Tabular {
        ns * na
    } else {
        na
    };
    let theta = (0..n).map(|_| normal.sample(rng)).collect();
    SoftmaxPolicy::from_logits(mode, ns, na, theta).expect("finite logits")
}

fn small_instance(rng: &mut ChaCha8Rng, index: u64) -> Result<TabularMdp> {
    let ns = rng.random_range(2..=6);
    let na = rng.random_range(2..=4);
    build_random_mdp(ns, na, 0.3, 1000 + index)
}

/// Random MDP whose last state is absorbing; every other transition row
/// leaks into it.
fn absorbing_instance(seed: u64, ns: usize, na: usize) -> Result<TabularMdp> {
    let base = build_random_mdp(ns, na, 0.2, seed)?;
    let goal = ns - 1;
    let mut p = Vec::with_capacity(ns * na * ns);
    let mut r = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            if s == goal {
                p.extend((0..ns).map(|t| if t == goal { 1.0 } else { 0.0 }));
                r.push(0.0);
                continue;
            }
            let row = base.transition(s, a);
            p.extend((0..ns).map(|t| 0.5 * row[t] + if t == goal { 0.5 } else { 0.0 }));
            r.push(base.reward(s, a));
        }
    }
    let mut start = vec![0.0; ns];
    start[0] = 1.0;
    let terminal = (0..ns).map(|s| s == goal).collect();
    TabularMdp::from_flat(ns, na, base.gamma(), start, terminal, p, r)
}

fn check_policy_gradient(_: &VerifyOptions) -> Result<Measured> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let mdp = small_instance(&mut rng, i)?;
        for mode in [ParamMode::Tabular, ParamMode::Shared] {
            let pi = random_policy(&mut rng, mode, mdp.n_states(), mdp.n_actions(), 1.0);
            let grad = policy_gradient(&mdp, &pi)?;
            let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-12);
            for k in 0..pi.n_params() {
                let mut up = pi.theta().to_vec();
                let mut down = up.clone();
                up[k] += h;
                down[k] -= h;
                let fd = (evaluate_policy(&mdp, &pi.with_theta(up)?.table())?.j
                    - evaluate_policy(&mdp, &pi.with_theta(down)?.table())?.j)
                    / (2.0 * h);
                worst = worst.max((fd - grad[k]).abs() / scale);
            }
        }
    }
    Ok(Measured::at_most(
        worst,
        1e-5,
        "max relative deviation from central differences",
    ))
}

fn check_kl_gradient_identity(_: &VerifyOptions) -> Result<Measured> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let mdp = small_instance(&mut rng, i)?;
        for mode in [ParamMode::Tabular, ParamMode::Shared] {
            let pi = random_policy(&mut rng, mode, mdp.n_states(), mdp.n_actions(), 1.0);
            let table = pi.table();
            let eval = evaluate_policy(&mdp, &table)?;
            let mu = improve(&eval, &table, &ImprovementSpec::OpReinforce)?;
            let problem = ProjectionProblem::with_weights(
                mu.state_mass(),
                mu.conditionals.clone(),
                Divergence::WeightedKl,
                table,
            );
            let g = problem.gradient(&pi);
            let pg = policy_gradient(&mdp, &pi)?;
            for (a, b) in g.iter().zip(&pg) {
                worst = worst.max((a + b).abs());
            }
        }
    }
    Ok(Measured::at_most(
        worst,
        1e-8,
        "max |∇ weighted KL + policy gradient|",
    ))
}

fn check_improvement_identity(_: &VerifyOptions) -> Result<Measured> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mdp = absorbing_instance(seed, 3, 2)?;
        let pi = random_policy(&mut rng, ParamMode::Tabular, 3, 2, 1.0).table();
        let ens = enumerate(&mdp, &pi, 6)?;
        let returns = ens.returns();
        let mean = ens.expected_return();
        let var: f64 = ens
            .probs()
            .iter()
            .zip(&returns)
            .map(|(p, r)| p * (r - mean).powi(2))
            .sum();
        let improved = ens.improve_trajectory()?.expected_return();
        worst = worst.max((improved - mean * (1.0 + var / (mean * mean))).abs());
    }
    Ok(Measured::at_most(
        worst,
        1e-10,
        "max |J(Rπ) − J(π)(1 + Var/E²)|",
    ))
}

fn check_transform_identity(_: &VerifyOptions) -> Result<Measured> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let transforms: [fn(f64) -> f64; 2] = [|x| x * x, |x| (2.0 * x).exp()];
    for seed in 0..10 {
        let mdp = absorbing_instance(100 + seed, 3, 2)?;
        let pi = random_policy(&mut rng, ParamMode::Tabular, 3, 2, 1.0).table();
        let ens = enumerate(&mdp, &pi, 6)?;
        let returns = ens.returns();
        for f in transforms {
            if returns.iter().any(|r| f(*r) <= 0.0) {
                continue;
            }
            let mean = ens.expected_return();
            let mean_f: f64 = ens
                .probs()
                .iter()
                .zip(&returns)
                .map(|(p, r)| p * f(*r))
                .sum();
            let cov: f64 = ens
                .probs()
                .iter()
                .zip(&returns)
                .map(|(p, r)| p * (r - mean) * (f(*r) - mean_f))
                .sum();
            let improved = ens.improve_trajectory_transformed(f)?.expected_return();
            worst = worst.max((improved - (mean + cov / mean_f)).abs());
        }
    }
    Ok(Measured::at_most(
        worst,
        1e-10,
        "max |J(fπ) − J(π) − Cov(R, f(R))/E[f(R)]|",
    ))
}

fn check_bound_validity(options: &VerifyOptions) -> Result<Measured> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = f64::INFINITY;
    let mut tight: f64 = 0.0;
    for i in 0..1000 {
        let mdp = build_random_mdp(5, 3, 0.3, 2000 + i)?;
        let scale = [0.5, 2.0, 5.0][i as usize % 3];
        let mode = if i % 2 == 0 {
            ParamMode::Tabular
        } else {
            ParamMode::Shared
        };
        let mu = random_policy(&mut rng, mode, 5, 3, scale).table();
        let pi = random_policy(&mut rng, mode, 5, 3, scale).table();
        let eval = evaluate_policy(&mdp, &mu)?;
        let j_pi = evaluate_policy(&mdp, &pi)?.j;
        worst = worst.min(j_pi - (options.operator_bound)(&eval, &mu, &pi)?);
        tight = tight.max(((options.operator_bound)(&eval, &mu, &mu)? - eval.j).abs());
    }
    let passed = worst >= -1e-9 && tight <= 1e-12;
    Ok(Measured {
        passed,
        measured: -worst,
        tolerance: 1e-9,
        detail: format!("largest excess of the bound over J(π); tightness error {tight:.3e}"),
    })
}

fn check_kl_form(_: &VerifyOptions) -> Result<Measured> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..300 {
        let mdp = build_random_mdp(5, 3, 0.3, 3000 + i)?;
        let mu = random_policy(&mut rng, ParamMode::Tabular, 5, 3, 2.0).table();
        let pi = random_policy(&mut rng, ParamMode::Tabular, 5, 3, 2.0).table();
        let eval = evaluate_policy(&mdp, &mu)?;
        let a = operator_lower_bound(&eval, &mu, &pi)?;
        let b = kl_form_lower_bound(&eval, &mu, &pi)?.value;
        worst = worst.max((a - b).abs());
    }
    Ok(Measured::at_most(
        worst,
        1e-9,
        "max |divergence form − log-ratio form|",
    ))
}

fn check_cpi_violation(_: &VerifyOptions) -> Result<Measured> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut found = 0usize;
    let mut largest: f64 = 0.0;
    for i in 0..2000 {
        let mdp = build_random_mdp(5, 3, 0.3, 4000 + i)?;
        let mu = random_policy(&mut rng, ParamMode::Tabular, 5, 3, 3.0).table();
        let pi = random_policy(&mut rng, ParamMode::Tabular, 5, 3, 3.0).table();
        let eval = evaluate_policy(&mdp, &mu)?;
        let excess = cpi_surrogate(&eval, &mu, &pi)? - evaluate_policy(&mdp, &pi)?.j;
        if excess > 1e-9 {
            found += 1;
            largest = largest.max(excess);
        }
    }
    Ok(Measured {
        passed: found > 0,
        measured: found as f64,
        tolerance: 1.0,
        detail: format!("pairs where the CPI surrogate exceeds J(π); largest excess {largest:.3e}"),
    })
}

fn check_trajectory_bounds(_: &VerifyOptions) -> Result<Measured> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = f64::INFINITY;
    for i in 0..200 {
        let mdp = absorbing_instance(500 + i, 3, 2)?;
        let horizon = 2 + (i as usize % 4);
        let mu = random_policy(&mut rng, ParamMode::Tabular, 3, 2, 1.5).table();
        let pi = random_policy(&mut rng, ParamMode::Tabular, 3, 2, 1.5).table();
        let ens_mu = enumerate(&mdp, &mu, horizon)?;
        let j_pi = enumerate(&mdp, &pi, horizon)?.expected_return();
        let pi_on_mu = ens_mu.with_policy(&mdp, &pi)?;
        let lb = lower_bound_trajectory(&ens_mu, pi_on_mu.probs())?;
        let jm = j_mu_bound(&ens_mu, pi_on_mu.prefix_probs())?;
        worst = worst.min(j_pi - lb).min(j_pi - jm);
    }
    Ok(Measured {
        passed: worst >= -1e-10,
        measured: -worst,
        tolerance: 1e-10,
        detail: "largest excess of either trajectory bound over J(π)".into(),
    })
}

/// Tabular softmax with logit `margin` on the greedy action and 0 elsewhere.
pub fn margin_policy(greedy: &[usize], n_actions: usize, margin: f64) -> Result<SoftmaxPolicy> {
    let mut theta = vec![0.0; greedy.len() * n_actions];
    for (s, &a) in greedy.iter().enumerate() {
        theta[s * n_actions + a] = margin;
    }
    SoftmaxPolicy::from_logits(ParamMode::Tabular, greedy.len(), n_actions, theta)
}

/// Norm of the projection-objective gradient at the policy itself.
pub fn fixed_point_residual(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    improvement: &ImprovementSpec,
    kind: Divergence,
) -> Result<f64> {
    let table = policy.table();
    let eval = evaluate_policy(mdp, &table)?;
    let mu = improve(&eval, &table, improvement)?;
    let grad = ProjectionProblem::new(&mu, kind, policy).gradient(policy);
    Ok(grad.iter().map(|g| g * g).sum::<f64>().sqrt())
}

pub fn fixed_point_compositions() -> Vec<(ImprovementSpec, Divergence)> {
    vec![
        (ImprovementSpec::OpReinforce, Divergence::WeightedKl),
        (
            ImprovementSpec::Polynomial { inv_alpha: 4.0 },
            Divergence::AlphaDivergence { alpha: 0.25 },
        ),
        (
            ImprovementSpec::Polynomial { inv_alpha: 2.0 },
            Divergence::AlphaDivergence { alpha: 0.5 },
        ),
    ]
}

fn check_fixed_point(_: &VerifyOptions) -> Result<Measured> {
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for seed in 0..10 {
        let mdp = build_random_mdp(5, 3, 0.3, 5000 + seed)?;
        let greedy = value_iteration(&mdp, 1e-12)?.greedy;
        for (improvement, kind) in fixed_point_compositions() {
            let norms = [10.0, 20.0, 30.0]
                .iter()
                .map(|m| {
                    fixed_point_residual(&mdp, &margin_policy(&greedy, 3, *m)?, &improvement, kind)
                })
                .collect::<Result<Vec<_>>>()?;
            monotone &= norms.windows(2).all(|w| w[1] < w[0]);
            worst = worst.max(norms[2]);
        }
    }
    Ok(Measured {
        passed: monotone && worst < 1e-4,
        measured: worst,
        tolerance: 1e-4,
        detail: format!("gradient norm at margin 30; decreasing in margin: {monotone}"),
    })
}

/// States whose two best `Q` values differ by at least this are compared.
pub const GREEDY_GAP: f64 = 1e-3;

fn check_greedification(_: &VerifyOptions) -> Result<Measured> {
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    for seed in 0..20 {
        let mdp = build_random_mdp(6, 4, 0.3, 6000 + seed)?;
        let pi = PolicyTable::uniform(6, 4);
        let eval = evaluate_policy(&mdp, &pi)?;
        let greedy = greedy_actions(&mdp, &eval.v);
        let mu = improve(&eval, &pi, &ImprovementSpec::Polynomial { inv_alpha: 64.0 })?;
        for (s, &g) in greedy.iter().enumerate() {
            let mut q = eval.q_row(s).to_vec();
            q.sort_by(|a, b| b.total_cmp(a));
            if q[0] - q[1] < GREEDY_GAP {
                continue;
            }
            compared += 1;
            let row = mu.conditionals.row(s);
            let best = (0..4).fold(0, |b, a| if row[a] > row[b] { a } else { b });
            if best != g {
                mismatches += 1;
            }
        }
    }
    Ok(Measured::at_most(
        mismatches as f64,
        0.0,
        format!("argmax mismatches over {compared} states"),
    ))
}

/// Total variation to `target` over the non-terminal states `target`
/// visits, and `J`. Actions at terminal states have no effect.
pub fn offpolicy_gap(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    target: &PolicyTable,
) -> Result<(f64, f64)> {
    let eval_target = evaluate_policy(mdp, target)?;
    let mut tv: f64 = 0.0;
    for s in 0..mdp.n_states() {
        if eval_target.occupancy[s] > 0.0 && !mdp.is_terminal(s) {
            let d: f64 = policy
                .row(s)
                .iter()
                .zip(target.row(s))
                .map(|(a, b)| (a - b).abs())
                .sum();
            tv = tv.max(0.5 * d);
        }
    }
    Ok((tv, evaluate_policy(mdp, policy)?.j))
}

fn check_offpolicy(_: &VerifyOptions) -> Result<Measured> {
    let config = preset("offpolicy-optimal")?;
    let mdp = config.build_env()?;
    let spec = config.train_spec(&mdp)?;
    let target = match &spec.sampling {
        crate::operators::Sampling::Fixed(t) => t.clone(),
        crate::operators::Sampling::Current => {
            return Err(Error::InvalidSpec("preset samples on-policy".into()))
        }
    };
    let out = train(&mdp, &config.initial_policy(&mdp)?, &spec)?;
    let (tv, j) = offpolicy_gap(&mdp, &out.policy.table(), &target)?;
    let j_star = evaluate_policy(&mdp, &target)?.j;
    Ok(Measured {
        passed: tv <= 1e-6 && j >= j_star - 1e-6,
        measured: tv,
        tolerance: 1e-6,
        detail: format!(
            "total variation on visited non-terminal states; J = {j:.9}, J* = {j_star:.9}"
        ),
    })
}

/// Central difference step in `t` for tangency checks.
pub const TANGENCY_STEP: f64 = 1e-4;

fn check_landscape(_: &VerifyOptions) -> Result<Measured> {
    let mdp = build_four_room();
    let rows = bound_landscape(&mdp, &crate::bounds::uniform_grid(101), &DEFAULT_ANCHORS)?;
    let excess = rows
        .iter()
        .map(|r| r.op_bound - r.j)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut worst: f64 = 0.0;
    let ns = mdp.n_states();
    for &anchor in &DEFAULT_ANCHORS {
        let mu = segment_policy(ns, anchor)?.table();
        let eval = evaluate_policy(&mdp, &mu)?;
        let at = |t: f64| -> Result<(f64, f64, f64)> {
            let pi = segment_policy(ns, t)?.table();
            Ok((
                evaluate_policy(&mdp, &pi)?.j,
                operator_lower_bound(&eval, &mu, &pi)?,
                cpi_surrogate(&eval, &mu, &pi)?,
            ))
        };
        let (j0, l0, c0) = at(anchor)?;
        let up = at(anchor + TANGENCY_STEP)?;
        let down = at(anchor - TANGENCY_STEP)?;
        let slope = |a: f64, b: f64| (a - b) / (2.0 * TANGENCY_STEP);
        let dj = slope(up.0, down.0);
        worst = worst
            .max((l0 - j0).abs())
            .max((c0 - j0).abs())
            .max((slope(up.1, down.1) - dj).abs())
            .max((slope(up.2, down.2) - dj).abs());
    }
    Ok(Measured {
        passed: excess <= 1e-9 && worst <= 1e-5,
        measured: worst,
        tolerance: 1e-5,
        detail: format!("value/slope mismatch at anchors; largest bound excess {excess:.3e}"),
    })
}

fn check_fig1(_: &VerifyOptions) -> Result<Measured> {
    let mdp = build_four_room();
    let reference = class_optimum(&mdp, ParamMode::Shared, 0)?;
    let j_star = reference.j;
    let mut curves = Vec::new();
    for name in ["fig1-left", "fig1-middle", "fig1-anneal", "op-reinforce"] {
        let config = preset(name)?;
        let out = train(
            &mdp,
            &config.initial_policy(&mdp)?,
            &config.train_spec(&mdp)?,
        )?;
        curves.push(out.curve.iter().map(|r| r.j).collect::<Vec<f64>>());
    }
    let last = |c: &Vec<f64>| *c.last().expect("non-empty curve");
    let left_slope = regret_stats(j_star, &curves[0]).1;
    let middle_slope = regret_stats(j_star, &curves[1]).1;
    let middle_90 = iterations_to_fraction(j_star, &curves[1], 0.9);
    let op_90 = iterations_to_fraction(j_star, &curves[3], 0.9);
    let faster = matches!((middle_90, op_90), (Some(m), Some(o)) if m < o)
        || (middle_90.is_some() && op_90.is_none());
    let passed = last(&curves[0]) <= 0.95 * j_star
        && last(&curves[1]) >= 0.99 * j_star
        && last(&curves[2]) >= 0.99 * j_star
        && faster
        && left_slope >= 5.0 * middle_slope;
    Ok(Measured {
        passed,
        measured: last(&curves[1]) / j_star,
        tolerance: 0.99,
        detail: format!(
            "class J* = {j_star:.6} (value iteration {:.6}); final J left/middle/anneal = {:.6}/{:.6}/{:.6}; \
             90% after {middle_90:?} vs {op_90:?} updates; regret slopes {left_slope:.4e} vs {middle_slope:.4e}",
            reference.value_iteration_j,
            last(&curves[0]),
            last(&curves[1]),
            last(&curves[2]),
        ),
    })
}

/// Operator bound with the sign of its log term flipped, for mutation tests.
pub fn flipped_operator_bound(
    eval: &PolicyEval,
    mu: &PolicyTable,
    pi: &PolicyTable,
) -> Result<f64> {
    let correct = operator_lower_bound(eval, mu, pi)?;
    Ok(2.0 * eval.j - correct)
}

/// θ-gradient of the operator bound at `μ`, exposed for the CLI `eval`
/// command's diagnostics.
pub fn bound_gradient_at(mdp: &TabularMdp, mu: &SoftmaxPolicy) -> Result<Vec<f64>> {
    let table = mu.table();
    let eval = evaluate_policy(mdp, &table)?;
    Ok(operator_bound_gradient(&eval, &table, mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        for name in [
            "kl_gradient_identity",
            "trajectory_improvement",
            "kl_form",
            "greedification",
        ] {
            let report = verify(&VerifyOptions {
                filter: Some(name.into()),
                ..VerifyOptions::default()
            });
            assert_eq!(report.checks.len(), 1, "{name}");
            assert!(report.passed, "{:?}", report.checks);
        }
    }

    #[test]
    fn flipped_log_term_is_caught() {
        let report = verify(&VerifyOptions {
            filter: Some("operator_bound_validity".into()),
            operator_bound: flipped_operator_bound,
        });
        assert!(!report.passed);
    }

    #[test]
    fn absorbing_instances_are_valid() {
        let mdp = absorbing_instance(3, 4, 2).unwrap();
        assert!(mdp.is_terminal(3));
        assert_eq!(mdp.start()[0], 1.0);
    }
}
