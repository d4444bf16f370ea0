//! Ratio of normalizing constants `r = Z1 / Z2` from draws of both normalized
//! densities.
//!
//! With `w(x) = p~1(x) / p~2(x)` the half-order bridge uses
//! `r = E_p2[w^(1/2)] / E_p1[w^(-1/2)]`; the product of the same two means
//! estimates `rho^2`. Forward and reverse importance sampling (`E_p2[w]` and
//! `1 / E_p1[1/w]`) are provided for comparison.

use serde::{Deserialize, Serialize};

use crate::error::{HalfordError, Result, SideId};
use crate::families::ModelPair;
use crate::stats::{log_mean_exp, LogMoments};
use crate::stream::{Stream, STREAM_H1, STREAM_H2};

/// Overlap floor below which a link of a bridging chain is flagged.
pub const DEFAULT_OVERLAP_FLOOR: f64 = 0.5;

/// Two unnormalized densities with samplers for their normalized versions.
///
/// `log p~1 = log density_1 + log_scale_1`, where `density_1` comes from the
/// wrapped [`ModelPair`]. Keeping the scale separate means rescaling never
/// touches the draws or the per-draw log ratios.
#[derive(Debug, Clone)]
pub struct UnnormalizedPair {
    pub pair: ModelPair,
    pub log_scale_1: f64,
    pub true_ratio: Option<f64>,
}

impl UnnormalizedPair {
    /// Wraps a pair whose densities may or may not be normalized.
    pub fn new(pair: ModelPair, true_ratio: Option<f64>) -> Self {
        UnnormalizedPair {
            pair,
            log_scale_1: 0.0,
            true_ratio,
        }
    }

    /// Wraps a pair of normalized densities, so `r = 1`.
    pub fn normalized(pair: ModelPair) -> Self {
        Self::new(pair, Some(1.0))
    }

    /// Replaces `p~1` by `c * p~1`; the true ratio, if known, scales too.
    pub fn rescaled(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(HalfordError::param(
                "c",
                c,
                "scale must be positive and finite",
            ));
        }
        self.log_scale_1 += c.ln();
        self.true_ratio = self.true_ratio.map(|r| r * c);
        Ok(self)
    }

    /// `log w(x)`.
    pub fn log_w(&self, x: f64) -> Result<f64> {
        Ok(self.pair.log_bayes_factor(x)? + self.log_scale_1)
    }

    /// Per-draw `log w` without the scale, from `m` draws of `side`.
    fn base_log_w(&self, side: SideId, m: usize, seed: u64) -> Result<Vec<f64>> {
        let id = match side {
            SideId::H1 => STREAM_H1,
            SideId::H2 => STREAM_H2,
        };
        self.pair
            .draw_log_bayes_factors(side, m, &mut Stream::new(seed, id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeEstimate {
    pub a2_hat: f64,
    pub a1_hat: f64,
    pub r_hat: f64,
    pub log_r_hat: f64,
    pub rho_sq_hat: f64,
    pub var_hat: f64,
    pub rsd_hat: f64,
    pub m1: usize,
    pub m2: usize,
    pub seed: u64,
}

/// Half-order bridge estimate of `Z1 / Z2` from `m1` draws of `p1` and `m2`
/// draws of `p2`.
pub fn estimate_half_order_bridge(
    pair: &UnnormalizedPair,
    m1: usize,
    m2: usize,
    seed: u64,
) -> Result<BridgeEstimate> {
    if m1 < 2 || m2 < 2 {
        return Err(HalfordError::Plan(format!(
            "bridge needs m1, m2 >= 2 (got {m1}, {m2})"
        )));
    }
    let half = |v: Vec<f64>, sign: f64| v.into_iter().map(|x| sign * 0.5 * x).collect::<Vec<_>>();
    let log_a2 = log_mean_exp(&half(pair.base_log_w(SideId::H2, m2, seed)?, 1.0));
    let log_a1 = log_mean_exp(&half(pair.base_log_w(SideId::H1, m1, seed)?, -1.0));
    let s = pair.log_scale_1;
    let log_r_hat = log_a2 - log_a1 + s;
    let rho_sq_hat = (log_a2 + log_a1).exp();
    let r_hat = log_r_hat.exp();
    let inv_m = 1.0 / m1 as f64 + 1.0 / m2 as f64;
    // The ratio of the two means has relative variance ((1 - rho^2) / rho^2)(1/m1 + 1/m2).
    let rel_var = ((1.0 - rho_sq_hat) / rho_sq_hat).max(0.0) * inv_m;
    Ok(BridgeEstimate {
        a2_hat: (log_a2 + 0.5 * s).exp(),
        a1_hat: (log_a1 - 0.5 * s).exp(),
        r_hat,
        log_r_hat,
        rho_sq_hat,
        var_hat: r_hat * r_hat * rel_var,
        rsd_hat: rel_var.sqrt(),
        m1,
        m2,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsDirection {
    /// Mean of `w` under `p2`.
    Forward,
    /// Reciprocal of the mean of `1/w` under `p1`.
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsEstimate {
    pub direction: IsDirection,
    #[serde(with = "crate::stats::ext_real_serde")]
    pub r_hat: f64,
    #[serde(with = "crate::stats::ext_real_serde")]
    pub se: f64,
    pub n: usize,
    pub overflow_count: u64,
    pub seed: u64,
}

fn one_sided(
    pair: &UnnormalizedPair,
    n: usize,
    seed: u64,
    direction: IsDirection,
) -> Result<IsEstimate> {
    if n < 2 {
        return Err(HalfordError::Plan(format!(
            "importance sampling needs N >= 2 (got {n})"
        )));
    }
    let (side, sign) = match direction {
        IsDirection::Forward => (SideId::H2, 1.0),
        IsDirection::Reverse => (SideId::H1, -1.0),
    };
    let mut acc = LogMoments::default();
    for lw in pair.base_log_w(side, n, seed)? {
        acc.push_log(sign * (lw + pair.log_scale_1));
    }
    let mean = acc.mean();
    let se_mean = (acc.sample_variance() / n as f64).sqrt();
    let (r_hat, se) = match direction {
        IsDirection::Forward => (mean, se_mean),
        IsDirection::Reverse => {
            if mean <= 0.0 {
                return Err(HalfordError::Indeterminate(
                    "mean of 1/w underflowed to zero; the reverse estimate is infinite".into(),
                ));
            }
            // First-order delta method on 1 / mean.
            (1.0 / mean, se_mean / (mean * mean))
        }
    };
    Ok(IsEstimate {
        direction,
        r_hat,
        se,
        n,
        overflow_count: acc.overflow_count(),
        seed,
    })
}

/// `(1/N) sum w(X_i)` with `X_i ~ p2`.
pub fn estimate_forward_is(pair: &UnnormalizedPair, n: usize, seed: u64) -> Result<IsEstimate> {
    one_sided(pair, n, seed, IsDirection::Forward)
}

/// `1 / ((1/N) sum 1/w(X_i))` with `X_i ~ p1`. The delta-method SE is
/// unreliable when `E_p1[w^-2]` is infinite.
pub fn estimate_reverse_is(pair: &UnnormalizedPair, n: usize, seed: u64) -> Result<IsEstimate> {
    one_sided(pair, n, seed, IsDirection::Reverse)
}

/// Predicted relative SD of the half-order bridge:
/// `sqrt((rho^-2 - 1)(1/m1 + 1/m2))`.
pub fn predict_bridge_rsd(rho: f64, m1: usize, m2: usize) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(HalfordError::param(
            "rho",
            rho,
            "overlap must lie in (0, 1]",
        ));
    }
    if m1 == 0 || m2 == 0 {
        return Err(HalfordError::Plan("budgets must be positive".into()));
    }
    Ok(((1.0 / (rho * rho) - 1.0) * (1.0 / m1 as f64 + 1.0 / m2 as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub from: String,
    pub to: String,
    pub rho: f64,
    pub below_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub floor: f64,
    pub links: Vec<ChainLink>,
    /// Every adjacent overlap is at least `floor`.
    pub ok: bool,
    /// Sum of per-link relative variances at budgets `m1 = m2 = m`, if given.
    pub predicted_log_r_sd: Option<f64>,
}

/// Checks a user-supplied bridging chain. `stages` are the labels of the
/// intermediate densities in order and `overlaps[i]` the estimated overlap of
/// stage `i` with stage `i + 1`.
pub fn check_chain(
    stages: &[String],
    overlaps: &[f64],
    floor: f64,
    per_link_budget: Option<usize>,
) -> Result<ChainReport> {
    if stages.len() < 2 || overlaps.len() + 1 != stages.len() {
        return Err(HalfordError::Input(format!(
            "a chain of {} stages needs {} overlaps (got {})",
            stages.len(),
            stages.len().saturating_sub(1),
            overlaps.len()
        )));
    }
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(HalfordError::param("floor", floor, "must lie in (0, 1]"));
    }
    let mut links = Vec::with_capacity(overlaps.len());
    let mut var = 0.0;
    for (i, &rho) in overlaps.iter().enumerate() {
        if let Some(m) = per_link_budget {
            var += predict_bridge_rsd(rho, m, m)?.powi(2);
        } else if !(rho > 0.0 && rho <= 1.0) {
            return Err(HalfordError::param(
                "rho",
                rho,
                "overlap must lie in (0, 1]",
            ));
        }
        links.push(ChainLink {
            from: stages[i].clone(),
            to: stages[i + 1].clone(),
            rho,
            below_floor: rho < floor,
        });
    }
    Ok(ChainReport {
        floor,
        ok: links.iter().all(|l| !l.below_floor),
        links,
        predicted_log_r_sd: per_link_budget.map(|_| var.sqrt()),
    })
}
