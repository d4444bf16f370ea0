//! Good checks: compare Monte Carlo moments of computed Bayes factors with
//! their exact values.
//!
//! For exponent `t`, draws from H2 are transformed to `B^t` and draws from H1
//! to `B^(t-1)`; both have mean `I(t)`. The two-sided check reports the
//! difference of the two sample means, which has mean zero whenever the Bayes
//! factors are computed correctly. At `t = 1/2` both transforms have variance
//! `1 - rho^2 <= 1`, so the check is always well behaved.
//!
//! A one-sided check compares a single side mean with the exact `I(t)`.
//! Reverse orientations are obtained by swapping the model labels
//! ([`ModelPair::swapped`] / [`LogBfSample::swapped`]), never by separate code.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HalfordError, Result, SideId};
use crate::families::ModelPair;
use crate::overlap::{hellinger_integral, Method};
use crate::stats::{normal_quantile, LogMoments};
use crate::stream::{Stream, STREAM_H1, STREAM_H2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sides {
    TwoSided,
    OneSidedFromH1,
    OneSidedFromH2,
}

impl Sides {
    fn uses(self, side: SideId) -> bool {
        matches!(
            (self, side),
            (Sides::TwoSided, _)
                | (Sides::OneSidedFromH1, SideId::H1)
                | (Sides::OneSidedFromH2, SideId::H2)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// `z * se_hat`.
    Clt,
    /// `z * sqrt(1/m1 + 1/m2)`, using the bound `Var <= 1` at half order.
    WorstCaseClt,
    /// `sqrt((1/m1 + 1/m2) / alpha)`; `sqrt(4 / (N alpha))` for a balanced split.
    Chebyshev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Flagged,
    /// One-sided check without an exact target.
    TargetUnknown,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:path => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = HalfordError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($variant),)+
                    other => Err(HalfordError::Input(format!(
                        "unknown {} `{other}` (expected one of: {})",
                        stringify!($ty),
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

text_enum!(Sides {
    Sides::TwoSided => "two-sided",
    Sides::OneSidedFromH1 => "one-sided-from-h1",
    Sides::OneSidedFromH2 => "one-sided-from-h2",
});
text_enum!(ThresholdRule {
    ThresholdRule::Clt => "clt",
    ThresholdRule::WorstCaseClt => "worst-case-clt",
    ThresholdRule::Chebyshev => "chebyshev",
});
text_enum!(Verdict {
    Verdict::Consistent => "consistent",
    Verdict::Flagged => "flagged",
    Verdict::TargetUnknown => "target-unknown",
});

/// Everything needed to run one check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckPlan {
    pub t: f64,
    pub sides: Sides,
    pub m1: usize,
    pub m2: usize,
    pub alpha: f64,
    pub threshold_rule: ThresholdRule,
    pub seed: u64,
    /// Stream ids for the H1 and H2 simulators.
    pub stream_ids: [u64; 2],
    /// Retain per-draw transforms in the report.
    #[serde(default)]
    pub keep_raw: bool,
}

impl CheckPlan {
    /// Two-sided half-order check at `alpha = 0.05` with the CLT threshold.
    pub fn half_order(m1: usize, m2: usize, seed: u64) -> Self {
        CheckPlan {
            t: 0.5,
            sides: Sides::TwoSided,
            m1,
            m2,
            alpha: 0.05,
            threshold_rule: ThresholdRule::Clt,
            seed,
            stream_ids: [STREAM_H1, STREAM_H2],
            keep_raw: false,
        }
    }

    /// Half-order plan with a total budget split as evenly as possible.
    pub fn balanced(total: usize, seed: u64) -> Self {
        let (m1, m2) = balanced_split(total);
        Self::half_order(m1, m2, seed)
    }

    pub fn with_t(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn with_sides(mut self, sides: Sides) -> Self {
        self.sides = sides;
        self
    }

    pub fn with_rule(mut self, rule: ThresholdRule) -> Self {
        self.threshold_rule = rule;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Plan for the label-swapped pair: budgets, sides and streams follow the
    /// models, so the swapped run consumes exactly the same random numbers.
    pub fn swapped(mut self) -> Self {
        std::mem::swap(&mut self.m1, &mut self.m2);
        self.stream_ids.swap(0, 1);
        self.sides = match self.sides {
            Sides::TwoSided => Sides::TwoSided,
            Sides::OneSidedFromH1 => Sides::OneSidedFromH2,
            Sides::OneSidedFromH2 => Sides::OneSidedFromH1,
        };
        self.t = 1.0 - self.t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() {
            return Err(HalfordError::Plan(format!(
                "exponent t = {} must be finite",
                self.t
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HalfordError::param(
                "alpha",
                self.alpha,
                "must lie in (0, 1)",
            ));
        }
        for (side, m) in [(SideId::H1, self.m1), (SideId::H2, self.m2)] {
            if self.sides.uses(side) && m < 2 {
                return Err(HalfordError::Plan(format!(
                    "{side} budget is {m}; sample variances need at least 2 draws"
                )));
            }
        }
        Ok(())
    }

    fn budget(&self, side: SideId) -> usize {
        match side {
            SideId::H1 if self.sides.uses(SideId::H1) => self.m1,
            SideId::H2 if self.sides.uses(SideId::H2) => self.m2,
            _ => 0,
        }
    }
}

/// `(floor(N/2), ceil(N/2))`.
pub fn balanced_split(total: usize) -> (usize, usize) {
    (total / 2, total - total / 2)
}

/// Log Bayes factors of draws from each model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LogBfSample {
    pub side1: Vec<f64>,
    pub side2: Vec<f64>,
}

impl LogBfSample {
    /// Draws `m1` observations from H1 and `m2` from H2 on the given streams.
    pub fn draw(
        pair: &ModelPair,
        m1: usize,
        m2: usize,
        seed: u64,
        stream_ids: [u64; 2],
    ) -> Result<Self> {
        let mut s1 = Stream::new(seed, stream_ids[0]);
        let mut s2 = Stream::new(seed, stream_ids[1]);
        Ok(LogBfSample {
            side1: pair.draw_log_bayes_factors(SideId::H1, m1, &mut s1)?,
            side2: pair.draw_log_bayes_factors(SideId::H2, m2, &mut s2)?,
        })
    }

    /// Draws what `plan` needs; an unused side stays empty.
    pub fn draw_for(pair: &ModelPair, plan: &CheckPlan) -> Result<Self> {
        Self::draw(
            pair,
            plan.budget(SideId::H1),
            plan.budget(SideId::H2),
            plan.seed,
            plan.stream_ids,
        )
    }

    /// The sample as seen from the label-swapped pair.
    pub fn swapped(&self) -> Self {
        LogBfSample {
            side1: self.side2.iter().map(|x| -x).collect(),
            side2: self.side1.iter().map(|x| -x).collect(),
        }
    }
}

/// Moments of one side's transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideSummary {
    pub m: usize,
    #[serde(with = "crate::stats::ext_real_serde")]
    pub mean: f64,
    #[serde(with = "crate::stats::ext_real_serde")]
    pub var: f64,
    pub overflow_count: u64,
    /// Largest per-draw transform on the log scale.
    pub max_log_value: f64,
    /// Smallest per-draw transform on the log scale.
    pub min_log_value: f64,
}

fn summarize(log_bf: &[f64], power: f64) -> (SideSummary, LogMoments) {
    let mut acc = LogMoments::default();
    for &lb in log_bf {
        acc.push_log(if power == 0.0 { 0.0 } else { power * lb });
    }
    (
        SideSummary {
            m: log_bf.len(),
            mean: acc.mean(),
            var: acc.sample_variance(),
            overflow_count: acc.overflow_count(),
            max_log_value: acc.max_log(),
            min_log_value: acc.min_log(),
        },
        acc,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSideValues {
    #[serde(with = "crate::stats::ext_real_vec_serde")]
    pub side1: Vec<f64>,
    #[serde(with = "crate::stats::ext_real_vec_serde")]
    pub side2: Vec<f64>,
}

/// Outcome of one check.
///
/// For a two-sided check `delta = rho_hat_2 - rho_hat_1`. For a one-sided
/// check `delta` is the side mean minus `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodCheckReport {
    pub plan: CheckPlan,
    pub side1: Option<SideSummary>,
    pub side2: Option<SideSummary>,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub rho_hat_1: Option<f64>,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub rho_hat_2: Option<f64>,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub rho_hat_pooled: Option<f64>,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub target: Option<f64>,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub delta: Option<f64>,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub s1_sq: Option<f64>,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub s2_sq: Option<f64>,
    #[serde(with = "crate::stats::ext_real_serde")]
    pub se_hat: f64,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub se_worst_case: Option<f64>,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub epsilon: Option<f64>,
    pub verdict: Verdict,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub t_stat: Option<f64>,
    /// Some transform exceeded `f64::MAX`; the affected mean is `+inf`.
    pub overflow_contaminated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_side_values: Option<RawSideValues>,
}

/// Tolerance `epsilon` for a check.
pub fn threshold(
    rule: ThresholdRule,
    alpha: f64,
    sides: Sides,
    t: f64,
    (m1, m2): (usize, usize),
    se_hat: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HalfordError::param("alpha", alpha, "must lie in (0, 1)"));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    if rule == ThresholdRule::Clt {
        return Ok(z * se_hat);
    }
    if sides != Sides::TwoSided || t != 0.5 {
        return Err(HalfordError::Plan(format!(
            "the {rule} threshold relies on the unit variance bound of the two-sided half-order check"
        )));
    }
    let bound = 1.0 / m1 as f64 + 1.0 / m2 as f64;
    Ok(match rule {
        ThresholdRule::WorstCaseClt => z * bound.sqrt(),
        ThresholdRule::Chebyshev => (bound / alpha).sqrt(),
        ThresholdRule::Clt => unreachable!(),
    })
}

/// Exact `I(t)` for one-sided targets, when obtainable without sampling.
pub fn moment_target(pair: &ModelPair, t: f64) -> Option<f64> {
    if t == 0.0 || t == 1.0 {
        return Some(1.0);
    }
    let method = Method::best_for(pair)?;
    hellinger_integral(pair, t, method).ok().map(|e| e.value)
}

/// Evaluates a check on pre-drawn log Bayes factors. Only the first
/// `plan.m1` / `plan.m2` values of each side are used.
pub fn evaluate_moment_check(
    sample: &LogBfSample,
    plan: &CheckPlan,
    target: Option<f64>,
) -> Result<GoodCheckReport> {
    plan.validate()?;
    let take = |side: SideId, v: &[f64]| -> Result<Option<Vec<f64>>> {
        let m = plan.budget(side);
        if m == 0 {
            return Ok(None);
        }
        if v.len() < m {
            return Err(HalfordError::Plan(format!(
                "{side} sample has {} draws, plan needs {m}",
                v.len()
            )));
        }
        Ok(Some(v[..m].to_vec()))
    };
    let lb1 = take(SideId::H1, &sample.side1)?;
    let lb2 = take(SideId::H2, &sample.side2)?;
    let s1 = lb1.as_deref().map(|v| summarize(v, plan.t - 1.0).0);
    let s2 = lb2.as_deref().map(|v| summarize(v, plan.t).0);

    let overflow = s1.map_or(0, |s| s.overflow_count) + s2.map_or(0, |s| s.overflow_count) > 0;
    let se_part = |s: &Option<SideSummary>| s.map_or(0.0, |s| s.var / s.m as f64);
    let se_hat = (se_part(&s1) + se_part(&s2)).sqrt();

    let (delta, pooled, used_target) = match plan.sides {
        Sides::TwoSided => {
            let (a, b) = (s1.unwrap().mean, s2.unwrap().mean);
            if a.is_infinite() && b.is_infinite() {
                return Err(HalfordError::Indeterminate(format!(
                    "both side means overflowed at t = {}; the discrepancy is inf - inf",
                    plan.t
                )));
            }
            (Some(b - a), Some((a + b) / 2.0), None)
        }
        Sides::OneSidedFromH1 | Sides::OneSidedFromH2 => {
            let mean = s1.or(s2).unwrap().mean;
            match target {
                Some(tv) if mean.is_infinite() && tv.is_infinite() => {
                    return Err(HalfordError::Indeterminate(format!(
                        "side mean and target I({}) are both infinite",
                        plan.t
                    )))
                }
                Some(tv) => (Some(mean - tv), None, Some(tv)),
                None => (None, None, None),
            }
        }
    };

    let se_worst_case = (plan.sides == Sides::TwoSided)
        .then(|| (1.0 / plan.m1 as f64 + 1.0 / plan.m2 as f64).sqrt());
    let epsilon = match delta {
        Some(_) => Some(threshold(
            plan.threshold_rule,
            plan.alpha,
            plan.sides,
            plan.t,
            (plan.m1, plan.m2),
            se_hat,
        )?),
        None => None,
    };
    // An overflowed mean is infinitely far from a finite target even though
    // its standard error (and hence a CLT epsilon) is infinite too.
    let verdict = match (delta, epsilon) {
        (Some(d), Some(e)) if d.abs() > e || d.is_infinite() => Verdict::Flagged,
        (Some(_), Some(_)) => Verdict::Consistent,
        _ => Verdict::TargetUnknown,
    };
    let t_stat = delta
        .filter(|_| se_hat > 0.0 && se_hat.is_finite())
        .map(|d| d / se_hat)
        .filter(|v| !v.is_nan());

    let raw_side_values = plan.keep_raw.then(|| {
        let tr = |v: &Option<Vec<f64>>, p: f64| {
            v.as_deref()
                .unwrap_or(&[])
                .iter()
                .map(|lb| if p == 0.0 { 1.0 } else { (p * lb).exp() })
                .collect()
        };
        RawSideValues {
            side1: tr(&lb1, plan.t - 1.0),
            side2: tr(&lb2, plan.t),
        }
    });

    Ok(GoodCheckReport {
        plan: *plan,
        side1: s1,
        side2: s2,
        rho_hat_1: s1.map(|s| s.mean),
        rho_hat_2: s2.map(|s| s.mean),
        rho_hat_pooled: pooled,
        target: used_target,
        delta,
        s1_sq: s1.map(|s| s.var),
        s2_sq: s2.map(|s| s.var),
        se_hat,
        se_worst_case,
        epsilon,
        verdict,
        t_stat,
        overflow_contaminated: overflow,
        raw_side_values,
    })
}

/// Runs the check described by `plan` at any exponent, one- or two-sided.
pub fn run_moment_check(pair: &ModelPair, plan: &CheckPlan) -> Result<GoodCheckReport> {
    plan.validate()?;
    let sample = LogBfSample::draw_for(pair, plan)?;
    let target = match plan.sides {
        Sides::TwoSided => None,
        _ => moment_target(pair, plan.t),
    };
    evaluate_moment_check(&sample, plan, target)
}

/// The two-sided half-order check.
pub fn run_two_sided_half_order(pair: &ModelPair, plan: &CheckPlan) -> Result<GoodCheckReport> {
    if plan.t != 0.5 || plan.sides != Sides::TwoSided {
        return Err(HalfordError::Plan(format!(
            "half-order check needs t = 1/2 and two sides (got t = {}, {})",
            plan.t, plan.sides
        )));
    }
    run_moment_check(pair, plan)
}

/// `Delta(m)` computed from the first `m` draws of each side, for every `m` in
/// `grid`.
pub fn running_discrepancy_from_sample(
    sample: &LogBfSample,
    plan: &CheckPlan,
    target: Option<f64>,
    grid: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid.first() == Some(&0) {
        return Err(HalfordError::Plan(
            "discrepancy grid must be positive and strictly increasing".into(),
        ));
    }
    let max = grid.last().copied().unwrap_or(0);
    let uses = |side| plan.sides.uses(side);
    for (side, v) in [(SideId::H1, &sample.side1), (SideId::H2, &sample.side2)] {
        if uses(side) && (v.len() < max || plan.budget(side) < max) {
            return Err(HalfordError::Plan(format!(
                "grid reaches m = {max} but the {side} budget is {}",
                plan.budget(side).min(v.len())
            )));
        }
    }
    let target = match plan.sides {
        Sides::TwoSided => 0.0,
        _ => target.ok_or_else(|| {
            HalfordError::Plan(format!(
                "one-sided discrepancy needs the exact I({})",
                plan.t
            ))
        })?,
    };
    let mut a1 = LogMoments::default();
    let mut a2 = LogMoments::default();
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0;
    for i in 0..max {
        if uses(SideId::H1) {
            a1.push_log((plan.t - 1.0) * sample.side1[i]);
        }
        if uses(SideId::H2) {
            a2.push_log(plan.t * sample.side2[i]);
        }
        if i + 1 == grid[next] {
            let d = match plan.sides {
                Sides::TwoSided => a2.mean() - a1.mean(),
                Sides::OneSidedFromH1 => a1.mean() - target,
                Sides::OneSidedFromH2 => a2.mean() - target,
            };
            if d.is_nan() {
                return Err(HalfordError::Indeterminate(format!(
                    "Delta({}) is inf - inf",
                    i + 1
                )));
            }
            out.push((i + 1, d));
            next += 1;
        }
    }
    Ok(out)
}

pub fn running_discrepancy(
    pair: &ModelPair,
    plan: &CheckPlan,
    grid: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let sample = LogBfSample::draw_for(pair, plan)?;
    let target = match plan.sides {
        Sides::TwoSided => None,
        _ => moment_target(pair, plan.t),
    };
    running_discrepancy_from_sample(&sample, plan, target, grid)
}

/// Matched-budget variance comparison between the one-sided order-2 check and
/// the two-sided half-order check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetComparison {
    pub n: usize,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub rho: Option<f64>,
    /// `(I(2) - 1) / N`.
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub v_one_sided: Option<f64>,
    /// `4 (1 - rho^2) / N`; the bound `4 / N` when `rho` is unknown.
    pub v_two_sided_balanced: f64,
    /// `(1/m1 + 1/m2)(1 - rho^2)` for the chosen allocation.
    pub v_two_sided_allocated: f64,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub relative_efficiency: Option<f64>,
    /// `1 / (4 rho^2)`.
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub efficiency_lower_bound: Option<f64>,
    /// `rho <= 1/2`, where the two-sided check is guaranteed to win.
    pub dominance: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub m1: usize,
    pub m2: usize,
    pub comparison: BudgetComparison,
}

/// Splits a budget of `n` draws (or `n` cost units when `costs` are given)
/// between the two sides and compares the resulting variance with the
/// one-sided order-2 check.
///
/// With unequal per-draw costs `c1, c2` the split is `m_j ∝ 1/sqrt(c_j)` under
/// `c1 m1 + c2 m2 = n`.
pub fn plan_budget(
    rho: Option<f64>,
    n: usize,
    costs: Option<(f64, f64)>,
    i2: Option<f64>,
) -> Result<BudgetPlan> {
    if n < 4 {
        return Err(HalfordError::Budget(n as u64));
    }
    if let Some(r) = rho {
        if !(r > 0.0 && r <= 1.0) {
            return Err(HalfordError::param("rho", r, "overlap must lie in (0, 1]"));
        }
    }
    let (m1, m2) = match costs {
        None => balanced_split(n),
        Some((c1, c2)) => {
            for (name, c) in [("c1", c1), ("c2", c2)] {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(HalfordError::param(name, c, "costs must be positive"));
                }
            }
            if c1 == c2 {
                let (a, b) = balanced_split((n as f64 / c1).floor() as usize);
                (a.max(2), b.max(2))
            } else {
                let denom = c1.sqrt() + c2.sqrt();
                let x1 = n as f64 / (c1.sqrt() * denom);
                let x2 = n as f64 / (c2.sqrt() * denom);
                ((x1.round() as usize).max(2), (x2.round() as usize).max(2))
            }
        }
    };
    let one_minus = rho.map_or(1.0, |r| 1.0 - r * r);
    let v_two_sided_balanced = 4.0 * one_minus / n as f64;
    let v_two_sided_allocated = (1.0 / m1 as f64 + 1.0 / m2 as f64) * one_minus;
    let v_one_sided = i2.map(|v| (v - 1.0) / n as f64);
    let relative_efficiency = v_one_sided.map(|v1| {
        if v_two_sided_balanced == 0.0 {
            if v1 == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            v1 / v_two_sided_balanced
        }
    });
    Ok(BudgetPlan {
        m1,
        m2,
        comparison: BudgetComparison {
            n,
            rho,
            v_one_sided,
            v_two_sided_balanced,
            v_two_sided_allocated,
            relative_efficiency,
            efficiency_lower_bound: rho.map(|r| 1.0 / (4.0 * r * r)),
            dominance: rho.is_some_and(|r| r <= 0.5),
        },
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_num)
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if v != 0.0 && (v.abs() >= 1e6 || v.abs() < 1e-4) {
        format!("{v:.6e}")
    } else {
        format!("{v:.6}")
    }
}

impl fmt::Display for GoodCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.plan;
        writeln!(f, "Good check  t = {}  ({})", p.t, p.sides)?;
        writeln!(f, "  seed             {}", p.seed)?;
        writeln!(f, "  budgets          m1 = {}  m2 = {}", p.m1, p.m2)?;
        writeln!(
            f,
            "  rule             {}  alpha = {}",
            p.threshold_rule, p.alpha
        )?;
        writeln!(f, "  side mean H1     {}", fmt_opt(self.rho_hat_1))?;
        writeln!(f, "  side mean H2     {}", fmt_opt(self.rho_hat_2))?;
        if self.rho_hat_pooled.is_some() {
            writeln!(f, "  pooled           {}", fmt_opt(self.rho_hat_pooled))?;
        }
        if self.target.is_some() {
            writeln!(f, "  target I(t)      {}", fmt_opt(self.target))?;
        }
        writeln!(f, "  s1^2             {}", fmt_opt(self.s1_sq))?;
        writeln!(f, "  s2^2             {}", fmt_opt(self.s2_sq))?;
        writeln!(f, "  delta            {}", fmt_opt(self.delta))?;
        writeln!(f, "  se_hat           {}", fmt_num(self.se_hat))?;
        if self.se_worst_case.is_some() {
            writeln!(f, "  se_worst_case    {}", fmt_opt(self.se_worst_case))?;
        }
        writeln!(f, "  epsilon          {}", fmt_opt(self.epsilon))?;
        writeln!(f, "  t_stat           {}", fmt_opt(self.t_stat))?;
        if self.overflow_contaminated {
            let n = self.side1.map_or(0, |s| s.overflow_count)
                + self.side2.map_or(0, |s| s.overflow_count);
            writeln!(f, "  overflow         {n} transform(s) exceeded f64 range")?;
        }
        write!(f, "  verdict          {}", self.verdict)
    }
}
