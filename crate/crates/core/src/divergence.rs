//! Divergences between discrete distributions.
//!
//! The α-divergence is Minka's form
//!
//! ```text
//! D_α(p ‖ q) = 1 / (α (1 − α)) · Σ_x [α p(x) + (1 − α) q(x) − p(x)^α q(x)^(1−α)]
//! ```
//!
//! which is defined for unnormalized measures, is nonnegative, vanishes iff
//! `p = q` and tends to `KL(p ‖ q)` as `α → 1`. It is sometimes called the
//! Rényi divergence of order α in the policy-gradient literature; the two
//! share minimizers over normalized `q` but differ in value.

use crate::{Error, Result};

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "distributions have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    if p.iter().chain(q).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument(
            "distributions must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// `KL(p ‖ q) = Σ p log(p / q)`, with `0 log 0 = 0`.
///
/// Errors when `p` puts mass where `q` has none.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::Support(format!(
                "p has mass {pi} at index {i} where q has none"
            )));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// Minka α-divergence for `α ∈ (0, 1]`; `α = 1` is `KL(p ‖ q)`.
pub fn alpha_divergence(p: &[f64], q: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside (0, 1]"
        )));
    }
    if alpha == 1.0 {
        return kl(p, q);
    }
    check_pair(p, q)?;
    let beta = 1.0 - alpha;
    let sum: f64 = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| alpha * pi + beta * qi - pi.powf(alpha) * qi.powf(beta))
        .sum();
    Ok(sum / (alpha * beta))
}

/// Normalized geometric mixture `p^α q^(1−α) / Z`.
pub fn geometric_mixture(p: &[f64], q: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_pair(p, q)?;
    let raw: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| pi.powf(alpha) * qi.powf(1.0 - alpha))
        .collect();
    let z: f64 = raw.iter().sum();
    if !(z > 0.0) {
        return Err(Error::Support("geometric mixture has no mass".into()));
    }
    Ok(raw.into_iter().map(|x| x / z).collect())
}

/// `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Numerically stable `log Σ exp(x)`; `-inf` when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simplex(raw: Vec<f64>) -> Vec<f64> {
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / z).collect()
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let v = kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(
            kl(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::Support(_))
        ));
    }

    #[test]
    fn alpha_identity_and_range() {
        for alpha in [0.1, 0.5, 0.9, 1.0] {
            assert!(
                alpha_divergence(&[0.2, 0.8], &[0.2, 0.8], alpha)
                    .unwrap()
                    .abs()
                    < 1e-15
            );
        }
        assert!(alpha_divergence(&[0.5, 0.5], &[0.5, 0.5], 0.0).is_err());
        assert!(alpha_divergence(&[0.5, 0.5], &[0.5, 0.5], 1.5).is_err());
    }

    #[test]
    fn geometric_mixture_half() {
        let p = [0.2, 0.8];
        let q = [0.6, 0.4];
        let m = geometric_mixture(&p, &q, 0.5).unwrap();
        let a = (0.2f64 * 0.6).sqrt();
        let b = (0.8f64 * 0.4).sqrt();
        assert!((m[0] - a / (a + b)).abs() < 1e-15);
        assert!((m[1] - b / (a + b)).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 2]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn gibbs_inequality(p in prop::collection::vec(0.01f64..1.0, 4),
                            q in prop::collection::vec(0.01f64..1.0, 4)) {
            let (p, q) = (simplex(p), simplex(q));
            prop_assert!(kl(&p, &q).unwrap() >= 0.0);
        }

        #[test]
        fn alpha_nonnegative(p in prop::collection::vec(0.01f64..1.0, 5),
                             q in prop::collection::vec(0.01f64..1.0, 5),
                             alpha in prop::sample::select(vec![0.1, 0.5, 0.9])) {
            let (p, q) = (simplex(p), simplex(q));
            prop_assert!(alpha_divergence(&p, &q, alpha).unwrap() >= -1e-14);
        }

        #[test]
        fn alpha_near_one_is_kl(p in prop::collection::vec(0.3f64..1.0, 3),
                                q in prop::collection::vec(0.3f64..1.0, 3)) {
            let (p, q) = (simplex(p), simplex(q));
            let d = alpha_divergence(&p, &q, 0.999).unwrap();
            prop_assert!((d - kl(&p, &q).unwrap()).abs() < 1e-3);
        }

        #[test]
        fn alpha_near_one_gap_is_second_order(p in prop::collection::vec(0.01f64..1.0, 4),
                                              q in prop::collection::vec(0.01f64..1.0, 4)) {
            let (p, q) = (simplex(p), simplex(q));
            let d = alpha_divergence(&p, &q, 0.999).unwrap();
            let spread: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln().powi(2)).sum();
            prop_assert!((d - kl(&p, &q).unwrap()).abs() <= 1e-3 * spread + 1e-12);
        }
    }
}
