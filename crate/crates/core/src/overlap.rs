//! The Hellinger integral family `I(t) = integral of p1^t p2^(1-t)`, the
//! half-order overlap `rho = I(1/2)`, the side-specific variance identities and
//! Renyi divergences.
//!
//! `+inf` is a legitimate value of `I(t)` outside the effective domain and is
//! returned as `f64::INFINITY`. NaN never escapes: every path either produces a
//! number in `[0, inf]` or an error.

use serde::{Deserialize, Serialize};

use crate::error::{HalfordError, Result, SideId};
use crate::families::{ModelPair, SupportKind};
use crate::quadrature::integrate_unit_interval;
use crate::stats::{log_sum_exp, LogMoments};
use crate::stream::{Stream, STREAM_H1, STREAM_H2};

/// Relative tolerance requested from quadrature.
pub const QUADRATURE_TOL: f64 = 1e-12;

/// Step used by [`kl_divergence_limit`].
pub const KL_STEP: f64 = 1e-4;

/// How `I(t)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Method {
    /// Closed form attached to the pair's family.
    Analytic,
    /// Log-sum-exp over every atom of a finite discrete support.
    ExactSum,
    /// Tanh-sinh quadrature on (0, 1).
    Quadrature,
    /// Sample mean of `B^t` under H2 draws (or `B^(t-1)` under H1 draws).
    MonteCarlo { m: usize, seed: u64, side: SideId },
}

impl Method {
    /// The most accurate deterministic method the pair supports.
    pub fn best_for(pair: &ModelPair) -> Option<Method> {
        if pair.has_analytic() {
            Some(Method::Analytic)
        } else {
            match pair.support() {
                SupportKind::FiniteDiscrete { .. } => Some(Method::ExactSum),
                SupportKind::ContinuousUnitInterval => Some(Method::Quadrature),
                SupportKind::Abstract => None,
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::ExactSum => "exact-sum",
            Method::Quadrature => "quadrature",
            Method::MonteCarlo { .. } => "monte-carlo",
        }
    }

    fn is_deterministic(&self) -> bool {
        !matches!(self, Method::MonteCarlo { .. })
    }
}

/// A value of `I(t)` together with its Monte Carlo standard error, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapEstimate {
    #[serde(with = "crate::stats::ext_real_serde")]
    pub value: f64,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub se: Option<f64>,
    pub method: Method,
    /// Monte Carlo contributions that overflowed `f64`.
    pub overflow_count: u64,
}

impl OverlapEstimate {
    fn exact(value: f64, method: Method) -> Self {
        OverlapEstimate {
            value,
            se: None,
            method,
            overflow_count: 0,
        }
    }
}

/// `t log p1 + (1 - t) log p2`, with the endpoints handled so that a zero
/// density never produces `0 * inf`.
fn log_integrand(t: f64, log_p1: f64, log_p2: f64) -> f64 {
    if t == 0.0 {
        log_p2
    } else if t == 1.0 {
        log_p1
    } else {
        t * log_p1 + (1.0 - t) * log_p2
    }
}

pub fn hellinger_integral(pair: &ModelPair, t: f64, method: Method) -> Result<OverlapEstimate> {
    if !t.is_finite() {
        return Err(HalfordError::param("t", t, "exponent must be finite"));
    }
    match method {
        Method::Analytic => pair
            .analytic_hellinger(t)
            .map(|v| OverlapEstimate::exact(v, method))
            .ok_or_else(|| HalfordError::Method {
                method: "analytic",
                reason: "the pair has no closed-form Hellinger integral".into(),
            }),
        Method::ExactSum => {
            let SupportKind::FiniteDiscrete { size } = pair.support() else {
                return Err(HalfordError::Method {
                    method: "exact-sum",
                    reason: "support is not finite-discrete".into(),
                });
            };
            let terms: Vec<f64> = (0..size)
                .map(|k| {
                    let x = k as f64;
                    let (l1, l2) = (
                        pair.log_density(SideId::H1, x),
                        pair.log_density(SideId::H2, x),
                    );
                    if l1 == f64::NEG_INFINITY && l2 == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        log_integrand(t, l1, l2)
                    }
                })
                .collect();
            Ok(OverlapEstimate::exact(log_sum_exp(&terms).exp(), method))
        }
        Method::Quadrature => {
            if pair.support() != SupportKind::ContinuousUnitInterval {
                return Err(HalfordError::Method {
                    method: "quadrature",
                    reason: "support is not the unit interval".into(),
                });
            }
            let q = integrate_unit_interval(
                |x| {
                    log_integrand(
                        t,
                        pair.log_density(SideId::H1, x),
                        pair.log_density(SideId::H2, x),
                    )
                    .exp()
                },
                QUADRATURE_TOL,
            )?;
            Ok(OverlapEstimate::exact(q.value, method))
        }
        Method::MonteCarlo { m, seed, side } => {
            if m == 0 {
                return Err(HalfordError::Plan("Monte Carlo budget must be >= 1".into()));
            }
            let (stream_id, power) = match side {
                SideId::H2 => (STREAM_H2, t),
                SideId::H1 => (STREAM_H1, t - 1.0),
            };
            let mut stream = Stream::new(seed, stream_id);
            let log_bf = pair.draw_log_bayes_factors(side, m, &mut stream)?;
            let mut acc = LogMoments::default();
            for lb in log_bf {
                acc.push_log(if power == 0.0 { 0.0 } else { power * lb });
            }
            let se = if m >= 2 {
                Some((acc.sample_variance() / m as f64).sqrt())
            } else {
                None
            };
            Ok(OverlapEstimate {
                value: acc.mean(),
                se,
                method,
                overflow_count: acc.overflow_count(),
            })
        }
    }
}

/// The half-order overlap `rho = I(1/2)`, the Bhattacharyya coefficient.
pub fn overlap_rho(pair: &ModelPair, method: Method) -> Result<OverlapEstimate> {
    hellinger_integral(pair, 0.5, method)
}

/// Variances of the two transforms whose means are `I(t)`:
/// `Var_H1(B^(t-1)) = I(2t-1) - I(t)^2` and `Var_H2(B^t) = I(2t) - I(t)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceIdentity {
    pub t: f64,
    #[serde(with = "crate::stats::ext_real_serde")]
    pub var_side1: f64,
    #[serde(with = "crate::stats::ext_real_serde")]
    pub var_side2: f64,
    #[serde(with = "crate::stats::ext_real_serde")]
    pub worst_side: f64,
}

pub fn variance_identity(pair: &ModelPair, t: f64, method: Method) -> Result<VarianceIdentity> {
    if !method.is_deterministic() {
        return Err(HalfordError::Method {
            method: "monte-carlo",
            reason: "variance identities need a deterministic evaluation of I".into(),
        });
    }
    let it = hellinger_integral(pair, t, method)?.value;
    if it.is_infinite() {
        return Err(HalfordError::OutsideDomain { t });
    }
    let sq = it * it;
    // inf - finite stays inf; negative round-off is clamped.
    let var = |s: f64| -> Result<f64> {
        let v = hellinger_integral(pair, s, method)?.value;
        Ok((v - sq).max(0.0))
    };
    let var_side1 = var(2.0 * t - 1.0)?;
    let var_side2 = var(2.0 * t)?;
    Ok(VarianceIdentity {
        t,
        var_side1,
        var_side2,
        worst_side: var_side1.max(var_side2),
    })
}

/// Order-`t` Renyi divergence `log I(t) / (t - 1)` of `p1` from `p2`.
///
/// `t = 1` is rejected; use [`kl_divergence_limit`]. Outside the effective
/// domain the `+inf` marker is returned.
pub fn renyi_divergence(pair: &ModelPair, t: f64, method: Method) -> Result<f64> {
    if t <= 0.0 {
        return Err(HalfordError::UnsupportedOrder {
            t,
            reason: "order must be positive",
        });
    }
    if t == 1.0 {
        return Err(HalfordError::UnsupportedOrder {
            t,
            reason: "order 1 is the KL limit; use kl_divergence_limit",
        });
    }
    let it = hellinger_integral(pair, t, method)?.value;
    if it.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(it.ln() / (t - 1.0))
}

/// Approximate `KL(p1 || p2) = phi'(1)` with `phi = log I`, by a central
/// difference of step [`KL_STEP`]. Truncation error is `O(KL_STEP^2)`.
pub fn kl_divergence_limit(pair: &ModelPair, method: Method) -> Result<f64> {
    let hi = hellinger_integral(pair, 1.0 + KL_STEP, method)?.value;
    let lo = hellinger_integral(pair, 1.0 - KL_STEP, method)?.value;
    if hi.is_infinite() {
        return Err(HalfordError::OutsideDomain { t: 1.0 + KL_STEP });
    }
    Ok((hi.ln() - lo.ln()) / (2.0 * KL_STEP))
}

/// `I(t)` evaluated on a grid of exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapProfile {
    pub pair_label: String,
    pub grid: Vec<f64>,
    #[serde(with = "crate::stats::ext_real_vec_serde")]
    pub values: Vec<f64>,
    pub std_errors: Vec<Option<f64>>,
    pub rho: f64,
    pub method: Method,
}

pub fn overlap_profile(pair: &ModelPair, grid: &[f64], method: Method) -> Result<OverlapProfile> {
    let mut values = Vec::with_capacity(grid.len());
    let mut std_errors = Vec::with_capacity(grid.len());
    for &t in grid {
        let est = hellinger_integral(pair, t, method)?;
        values.push(est.value);
        std_errors.push(est.se);
    }
    let rho = overlap_rho(pair, method)?.value;
    Ok(OverlapProfile {
        pair_label: format!("{} vs {}", pair.label_1, pair.label_2),
        grid: grid.to_vec(),
        values,
        std_errors,
        rho,
        method,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// Largest amount by which `log I` exceeds its chord at an interior point.
    pub max_violation: f64,
    pub tolerance: f64,
    pub triples_checked: usize,
    pub pass: bool,
}

/// Checks that `log I` lies below the chord of every adjacent triple of finite
/// grid points (midpoint convexity on a uniform grid).
pub fn convexity_certificate(profile: &OverlapProfile, tolerance: f64) -> Result<ConvexityReport> {
    let mut pts: Vec<(f64, f64)> = profile
        .grid
        .iter()
        .zip(&profile.values)
        .filter(|(_, v)| v.is_finite() && **v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() < 3 {
        return Err(HalfordError::InsufficientGrid { finite: pts.len() });
    }
    let max_violation = pts
        .windows(3)
        .map(|w| {
            let (t0, f0) = w[0];
            let (t1, f1) = w[1];
            let (t2, f2) = w[2];
            let lambda = (t2 - t1) / (t2 - t0);
            f1 - (lambda * f0 + (1.0 - lambda) * f2)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ConvexityReport {
        max_violation,
        tolerance,
        triples_checked: pts.len() - 2,
        pass: max_violation <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::*;
    use approx::assert_relative_eq;

    fn binom10() -> ModelPair {
        make_binomial_pair(&BinomialPointNullSpec::uniform(10)).unwrap()
    }

    #[test]
    fn endpoints_are_one() {
        let pair = binom10();
        for t in [0.0, 1.0] {
            let v = hellinger_integral(&pair, t, Method::ExactSum)
                .unwrap()
                .value;
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_rho() {
        let pair = make_beta_unit_pair(&BetaUnitSpec { a: 3.0 }).unwrap();
        let rho = overlap_rho(&pair, Method::Analytic).unwrap().value;
        assert_relative_eq!(rho, 0.75f64.sqrt(), epsilon = 1e-15);
        let q = overlap_rho(&pair, Method::Quadrature).unwrap().value;
        assert_relative_eq!(q, 0.75f64.sqrt(), epsilon = 1e-12);

        let half = make_beta_unit_pair(&BetaUnitSpec { a: 0.5 }).unwrap();
        assert_relative_eq!(
            overlap_rho(&half, Method::Analytic).unwrap().value,
            2.0 * 0.5f64.sqrt() / 1.5,
            epsilon = 1e-15
        );
        let same = make_identical_pair();
        assert_eq!(overlap_rho(&same, Method::Analytic).unwrap().value, 1.0);
    }

    #[test]
    fn divergence_marker_not_error() {
        let pair = make_counterexample_pair(&PowerCounterexampleSpec::for_exponent(1.0)).unwrap();
        let v = hellinger_integral(&pair, 2.0, Method::Analytic).unwrap();
        assert_eq!(v.value, f64::INFINITY);
        assert_eq!(
            renyi_divergence(&pair, 2.0, Method::Analytic).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn method_errors() {
        let pair = make_beta_unit_pair(&BetaUnitSpec { a: 3.0 }).unwrap();
        assert!(matches!(
            hellinger_integral(&pair, 0.5, Method::ExactSum),
            Err(HalfordError::Method { .. })
        ));
        assert!(matches!(
            hellinger_integral(&binom10(), 0.5, Method::Quadrature),
            Err(HalfordError::Method { .. })
        ));
        assert!(matches!(
            hellinger_integral(&binom10(), 0.5, Method::Analytic),
            Err(HalfordError::Method { .. })
        ));
    }

    #[test]
    fn variance_identity_cases() {
        let pair = make_counterexample_pair(&PowerCounterexampleSpec::for_exponent(1.0)).unwrap();
        let v = variance_identity(&pair, 1.0, Method::Analytic).unwrap();
        assert_eq!(v.var_side2, f64::INFINITY);
        assert!(v.var_side1.abs() < 1e-15);
        assert_eq!(v.worst_side, f64::INFINITY);

        let same = make_identical_pair();
        for t in [-1.0, 0.3, 2.0] {
            let v = variance_identity(&same, t, Method::Analytic).unwrap();
            assert_eq!((v.var_side1, v.var_side2), (0.0, 0.0));
        }

        // t outside the domain.
        assert!(matches!(
            variance_identity(&pair, 2.5, Method::Analytic),
            Err(HalfordError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn half_order_equalization_on_binomial() {
        let pair = binom10();
        let rho = overlap_rho(&pair, Method::ExactSum).unwrap().value;
        let v = variance_identity(&pair, 0.5, Method::ExactSum).unwrap();
        assert!((v.var_side1 - (1.0 - rho * rho)).abs() < 1e-12);
        assert!((v.var_side2 - (1.0 - rho * rho)).abs() < 1e-12);
    }

    #[test]
    fn renyi_examples() {
        let same = make_identical_pair();
        assert_eq!(renyi_divergence(&same, 0.5, Method::Analytic).unwrap(), 0.0);
        let pair = make_beta_unit_pair(&BetaUnitSpec { a: 3.0 }).unwrap();
        let d = renyi_divergence(&pair, 0.5, Method::Analytic).unwrap();
        assert_relative_eq!(d, -2.0 * 0.75f64.sqrt().ln(), epsilon = 1e-14);
        assert_relative_eq!(d, 0.287_682_072_451_780_9, epsilon = 1e-14);
        assert!(matches!(
            renyi_divergence(&pair, 1.0, Method::Analytic),
            Err(HalfordError::UnsupportedOrder { .. })
        ));
        assert!(renyi_divergence(&pair, 0.0, Method::Analytic).is_err());
    }

    #[test]
    fn kl_limit_matches_closed_form() {
        // KL(Beta(a,1) || U) = log a + (1 - a)/a.
        let a: f64 = 3.0;
        let pair = make_beta_unit_pair(&BetaUnitSpec { a }).unwrap();
        let kl = kl_divergence_limit(&pair, Method::Analytic).unwrap();
        assert_relative_eq!(kl, a.ln() + (1.0 - a) / a, epsilon = 1e-7);
    }

    #[test]
    fn convexity_examples() {
        let pair = binom10();
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let prof = overlap_profile(&pair, &grid, Method::ExactSum).unwrap();
        let rep = convexity_certificate(&prof, 1e-10).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.triples_checked, 3);

        let same = make_identical_pair();
        let prof = overlap_profile(&same, &grid, Method::Analytic).unwrap();
        let rep = convexity_certificate(&prof, 0.0).unwrap();
        assert_eq!(rep.max_violation, 0.0);

        let beta = make_beta_unit_pair(&BetaUnitSpec { a: 3.0 }).unwrap();
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let prof = overlap_profile(&beta, &grid, Method::Quadrature).unwrap();
        assert!(convexity_certificate(&prof, 1e-10).unwrap().pass);

        let short = overlap_profile(&pair, &[0.0, 1.0], Method::ExactSum).unwrap();
        assert!(matches!(
            convexity_certificate(&short, 1e-10),
            Err(HalfordError::InsufficientGrid { finite: 2 })
        ));
    }

    #[test]
    fn monte_carlo_matches_exact_sum() {
        let pair = binom10();
        let exact = overlap_rho(&pair, Method::ExactSum).unwrap().value;
        for side in [SideId::H1, SideId::H2] {
            let mc = overlap_rho(
                &pair,
                Method::MonteCarlo {
                    m: 20_000,
                    seed: 11,
                    side,
                },
            )
            .unwrap();
            let se = mc.se.unwrap();
            assert!(
                (mc.value - exact).abs() < 3.0 * se,
                "{side}: {} vs {exact} (se {se})",
                mc.value
            );
        }
    }
}
