//! Lower bounds on `J(π)` built around a reference policy `μ`.
//!
//! The operator bound
//!
//! ```text
//! L_μ(π) = J(μ) + Σ_s d^μ(s) Σ_a Q^μ(s,a) μ(a|s) log(π(a|s) / μ(a|s))
//! ```
//!
//! holds for every `π` when rewards are nonnegative. The CPI surrogate
//! `J(μ) + Σ_s d^μ(s) Σ_a Q^μ(s,a) (π(a|s) − μ(a|s))` agrees with it to first
//! order at `π = μ` but is not a bound.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::mdp::{evaluate_policy, PolicyEval, PolicyTable, TabularMdp};
use crate::operators::Q_NEGATIVE_SLACK;
use crate::policy::SoftmaxPolicy;
use crate::{Error, Result};

fn check_shapes(eval: &PolicyEval, mu: &PolicyTable, pi: &PolicyTable) -> Result<()> {
    let shape = (eval.n_states(), eval.n_actions());
    if (mu.n_states(), mu.n_actions()) != shape || (pi.n_states(), pi.n_actions()) != shape {
        return Err(Error::InvalidPolicy(
            "policies and evaluation have different shapes".into(),
        ));
    }
    Ok(())
}

/// `L_μ(π)`; `eval_mu` must be the evaluation of `mu`.
pub fn operator_lower_bound(
    eval_mu: &PolicyEval,
    mu: &PolicyTable,
    pi: &PolicyTable,
) -> Result<f64> {
    check_shapes(eval_mu, mu, pi)?;
    let mut total = 0.0;
    for s in 0..mu.n_states() {
        let d = eval_mu.occupancy[s];
        for a in 0..mu.n_actions() {
            let weight = d * eval_mu.q(s, a) * mu.get(s, a);
            if weight == 0.0 {
                continue;
            }
            let p = pi.get(s, a);
            if p <= 0.0 {
                return Err(Error::Support(format!("π({a}|{s}) = 0 where μ has weight")));
            }
            total += weight * (p / mu.get(s, a)).ln();
        }
    }
    Ok(eval_mu.j + total)
}

/// The operator bound in divergence form, with its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlFormBound {
    pub value: f64,
    /// `Σ_s d^μ(s) V^μ(s)`.
    pub mean_value: f64,
    /// `D_μ(I μ ‖ μ)`: state-weighted KL with weights `d V / mean_value`.
    pub divergence_to_mu: f64,
    /// `D_μ(I μ ‖ π)`.
    pub divergence_to_pi: f64,
}

/// `J(μ) + E[V] (D(Iμ ‖ μ) − D(Iμ ‖ π))` with `Iμ ∝ Q^μ μ`.
pub fn kl_form_lower_bound(
    eval_mu: &PolicyEval,
    mu: &PolicyTable,
    pi: &PolicyTable,
) -> Result<KlFormBound> {
    check_shapes(eval_mu, mu, pi)?;
    let na = mu.n_actions();
    let mean_value = eval_mu.weighted_value();
    let mut to_mu = 0.0;
    let mut to_pi = 0.0;
    for s in 0..mu.n_states() {
        let v = eval_mu.v[s];
        if v <= 0.0 {
            continue;
        }
        let w = eval_mu.occupancy[s] * v / mean_value;
        if w == 0.0 {
            continue;
        }
        for a in 0..na {
            let mut q = eval_mu.q(s, a);
            if q < 0.0 {
                if q < -Q_NEGATIVE_SLACK {
                    return Err(Error::NegativeQ {
                        state: s,
                        action: a,
                        value: q,
                    });
                }
                q = 0.0;
            }
            let target = q * mu.get(s, a) / v;
            if target == 0.0 {
                continue;
            }
            let p = pi.get(s, a);
            if p <= 0.0 {
                return Err(Error::Support(format!("π({a}|{s}) = 0 where Iμ has mass")));
            }
            to_mu += w * target * (target / mu.get(s, a)).ln();
            to_pi += w * target * (target / p).ln();
        }
    }
    Ok(KlFormBound {
        value: eval_mu.j + mean_value * (to_mu - to_pi),
        mean_value,
        divergence_to_mu: to_mu,
        divergence_to_pi: to_pi,
    })
}

/// Linear surrogate `J(μ) + Σ_s d^μ Σ_a Q^μ (π − μ)`.
pub fn cpi_surrogate(eval_mu: &PolicyEval, mu: &PolicyTable, pi: &PolicyTable) -> Result<f64> {
    check_shapes(eval_mu, mu, pi)?;
    let mut total = 0.0;
    for s in 0..mu.n_states() {
        let d = eval_mu.occupancy[s];
        for a in 0..mu.n_actions() {
            total += d * eval_mu.q(s, a) * (pi.get(s, a) - mu.get(s, a));
        }
    }
    Ok(eval_mu.j + total)
}

/// θ-gradient of `L_μ(π_θ)`.
pub fn operator_bound_gradient(
    eval_mu: &PolicyEval,
    mu: &PolicyTable,
    pi: &SoftmaxPolicy,
) -> Vec<f64> {
    let coef: Vec<f64> = (0..mu.n_states())
        .flat_map(|s| (0..mu.n_actions()).map(move |a| (s, a)))
        .map(|(s, a)| eval_mu.occupancy[s] * eval_mu.q(s, a) * mu.get(s, a))
        .collect();
    pi.score_gradient(&coef)
}

/// θ-gradient of the CPI surrogate at `π_θ`.
pub fn cpi_gradient(eval_mu: &PolicyEval, pi: &SoftmaxPolicy) -> Vec<f64> {
    let na = pi.n_actions();
    let mut coef = vec![0.0; pi.n_states() * na];
    for s in 0..pi.n_states() {
        let probs = pi.action_probs(s);
        for a in 0..na {
            coef[s * na + a] = eval_mu.occupancy[s] * eval_mu.q(s, a) * probs[a];
        }
    }
    pi.score_gradient(&coef)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub j_mu: f64,
    pub j_pi: f64,
    pub operator_bound: f64,
    pub cpi_surrogate: f64,
    pub gap_operator: f64,
    /// Negative whenever the surrogate overestimates `J(π)`.
    pub gap_cpi: f64,
}

pub fn bound_report(mdp: &TabularMdp, mu: &PolicyTable, pi: &PolicyTable) -> Result<BoundReport> {
    let eval_mu = evaluate_policy(mdp, mu)?;
    let j_pi = evaluate_policy(mdp, pi)?.j;
    let operator_bound = operator_lower_bound(&eval_mu, mu, pi)?;
    let cpi = cpi_surrogate(&eval_mu, mu, pi)?;
    Ok(BoundReport {
        j_mu: eval_mu.j,
        j_pi,
        operator_bound,
        cpi_surrogate: cpi,
        gap_operator: j_pi - operator_bound,
        gap_cpi: j_pi - cpi,
    })
}

/// Probabilities below this are clamped before taking logs on the segment.
pub const SEGMENT_FLOOR: f64 = 1e-12;

pub const DEFAULT_ANCHORS: [f64; 3] = [0.2, 0.5, 0.8];

/// Shared policy playing `[0.1, 0.8 t, 0.8 (1 − t), 0.1]` over
/// (down, left, up, right) in every state.
pub fn segment_policy(n_states: usize, t: f64) -> Result<SoftmaxPolicy> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "segment parameter {t} outside [0, 1]"
        )));
    }
    SoftmaxPolicy::shared_from_probs(
        n_states,
        &[0.1, 0.8 * t, 0.8 * (1.0 - t), 0.1],
        SEGMENT_FLOOR,
    )
}

/// `n` evenly spaced points covering `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub t: f64,
    pub anchor_t: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub op_bound: f64,
    pub cpi_surrogate: f64,
}

/// Evaluates `J` and both surrogates along the segment, once per anchor.
/// Rows are grouped by anchor, in grid order.
pub fn bound_landscape(
    mdp: &TabularMdp,
    grid: &[f64],
    anchors: &[f64],
) -> Result<Vec<LandscapeRow>> {
    if grid.is_empty() || anchors.is_empty() {
        return Err(Error::InvalidArgument(
            "landscape grid and anchor set must be non-empty".into(),
        ));
    }
    if mdp.n_actions() != 4 {
        return Err(Error::InvalidArgument(
            "the segment is defined for four actions".into(),
        ));
    }
    let ns = mdp.n_states();
    let points = grid
        .iter()
        .map(|&t| {
            let table = segment_policy(ns, t)?.table();
            let j = evaluate_policy(mdp, &table)?.j;
            Ok((t, table, j))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(grid.len() * anchors.len());
    for &anchor in anchors {
        let mu = segment_policy(ns, anchor)?.table();
        let eval_mu = evaluate_policy(mdp, &mu)?;
        for (t, table, j) in &points {
            rows.push(LandscapeRow {
                t: *t,
                anchor_t: anchor,
                j: *j,
                op_bound: operator_lower_bound(&eval_mu, &mu, table)?,
                cpi_surrogate: cpi_surrogate(&eval_mu, &mu, table)?,
            });
        }
    }
    Ok(rows)
}

pub fn write_landscape_csv<W: Write>(rows: &[LandscapeRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a landscape CSV, checking the header.
pub fn read_landscape_csv<R: Read>(reader: R) -> Result<Vec<LandscapeRow>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    let expected = ["t", "anchor_t", "J", "op_bound", "cpi_surrogate"];
    if header.iter().ne(expected) {
        return Err(Error::InvalidArgument(format!(
            "unexpected landscape header {header:?}"
        )));
    }
    let rows = input
        .deserialize()
        .collect::<std::result::Result<Vec<LandscapeRow>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_four_room, build_random_mdp};
    use crate::policy::{policy_gradient, ParamMode};

    fn random_policy(mode: ParamMode, ns: usize, na: usize, seed: f64) -> SoftmaxPolicy {
        let n = if mode == ParamMode::Tabular {
            ns * na
        } else {
            na
        };
        let theta = (0..n)
            .map(|i| 2.0 * ((i as f64 + 1.0) * seed).sin())
            .collect();
        SoftmaxPolicy::from_logits(mode, ns, na, theta).unwrap()
    }

    #[test]
    fn tight_at_mu() {
        let mdp = build_random_mdp(5, 3, 0.3, 11).unwrap();
        let mu = random_policy(ParamMode::Tabular, 5, 3, 0.7).table();
        let eval = evaluate_policy(&mdp, &mu).unwrap();
        assert_eq!(operator_lower_bound(&eval, &mu, &mu).unwrap(), eval.j);
        assert_eq!(cpi_surrogate(&eval, &mu, &mu).unwrap(), eval.j);
        let kl = kl_form_lower_bound(&eval, &mu, &mu).unwrap();
        assert_eq!(kl.divergence_to_mu, kl.divergence_to_pi);
        assert_eq!(kl.value, eval.j);
    }

    #[test]
    fn bound_holds_and_forms_agree() {
        for seed in 0..50u64 {
            let mdp = build_random_mdp(5, 3, 0.3, seed).unwrap();
            let mu = random_policy(ParamMode::Tabular, 5, 3, 0.3 + seed as f64).table();
            let pi = random_policy(ParamMode::Tabular, 5, 3, 1.9 * seed as f64 + 0.1).table();
            let report = bound_report(&mdp, &mu, &pi).unwrap();
            assert!(report.gap_operator >= -1e-9);
            let eval = evaluate_policy(&mdp, &mu).unwrap();
            let kl = kl_form_lower_bound(&eval, &mu, &pi).unwrap();
            assert!((kl.value - report.operator_bound).abs() < 1e-9);
        }
    }

    #[test]
    fn gradients_at_mu_are_policy_gradient() {
        for mode in [ParamMode::Tabular, ParamMode::Shared] {
            let mdp = build_random_mdp(4, 3, 0.0, 3).unwrap();
            let mu = random_policy(mode, 4, 3, 1.3);
            let eval = evaluate_policy(&mdp, &mu.table()).unwrap();
            let pg = policy_gradient(&mdp, &mu).unwrap();
            let a = operator_bound_gradient(&eval, &mu.table(), &mu);
            let b = cpi_gradient(&eval, &mu);
            for i in 0..pg.len() {
                assert!((a[i] - pg[i]).abs() < 1e-12);
                assert!((b[i] - pg[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn segment_probabilities() {
        let p = segment_policy(3, 0.25).unwrap();
        let probs = p.action_probs(2);
        for (x, y) in probs.iter().zip([0.1, 0.2, 0.6, 0.1]) {
            assert!((x - y).abs() < 1e-15);
        }
        let edge = segment_policy(3, 0.0).unwrap().action_probs(0);
        assert!(edge[1] > 0.0 && edge[1] < 1e-11);
        assert!(segment_policy(3, 1.5).is_err());
    }

    #[test]
    fn landscape_shape_and_csv() {
        let mdp = build_four_room();
        let grid = uniform_grid(11);
        let rows = bound_landscape(&mdp, &grid, &DEFAULT_ANCHORS).unwrap();
        assert_eq!(rows.len(), 33);
        for row in &rows {
            assert!(row.op_bound <= row.j + 1e-9);
        }
        let anchor = rows
            .iter()
            .find(|r| r.anchor_t == 0.5 && r.t == 0.5)
            .unwrap();
        assert!((anchor.op_bound - anchor.j).abs() < 1e-12);
        let mut buf = Vec::new();
        write_landscape_csv(&rows, &mut buf).unwrap();
        assert!(buf.starts_with(b"t,anchor_t,J,op_bound,cpi_surrogate\n"));
        assert_eq!(read_landscape_csv(&buf[..]).unwrap(), rows);
        assert!(bound_landscape(&mdp, &[], &DEFAULT_ANCHORS).is_err());
    }

    #[test]
    fn uniform_grid_endpoints() {
        let g = uniform_grid(101);
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[100], 1.0);
        assert_eq!(g[50], 0.5);
    }
}
