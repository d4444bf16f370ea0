//! Importance-weight concentration diagnostics.
//!
//! Weights are supplied on the log scale, normalized with a log-sum-exp shift,
//! and sorted in decreasing order before anything is summed, so the outputs
//! do not depend on the input order.

use serde::{Deserialize, Serialize};

use crate::error::{HalfordError, Result, SideId};
use crate::families::ModelPair;
use crate::stats::{csv_float, NeumaierSum};
use crate::stream::{Stream, STREAM_H1, STREAM_H2};

/// Which model generated the draws behind a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightOrigin {
    /// Draws from `p2`; weights are `W^t` with `W = p1 / p2`.
    ProposalSide,
    /// Draws from `p1`; weights are `W^(t-1)`.
    TargetSide,
}

impl WeightOrigin {
    pub fn side(self) -> SideId {
        match self {
            WeightOrigin::ProposalSide => SideId::H2,
            WeightOrigin::TargetSide => SideId::H1,
        }
    }

    /// Power of `W` applied for exponent `t`.
    pub fn power(self, t: f64) -> f64 {
        match self {
            WeightOrigin::ProposalSide => t,
            WeightOrigin::TargetSide => t - 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub log_weights: Vec<f64>,
    pub origin: WeightOrigin,
    pub transform_exponent: f64,
}

impl WeightVector {
    /// Weights `W^t` (or `W^(t-1)`) from per-draw log ratios `log W`.
    pub fn from_log_ratios(log_ratios: &[f64], origin: WeightOrigin, t: f64) -> Self {
        let p = origin.power(t);
        WeightVector {
            log_weights: log_ratios
                .iter()
                .map(|lw| if p == 0.0 { 0.0 } else { p * lw })
                .collect(),
            origin,
            transform_exponent: t,
        }
    }
}

/// Default Lorenz grid: 50 log-spaced points from `1e-3` to `1`.
pub fn default_lorenz_grid() -> Vec<f64> {
    let n = 50;
    (0..n)
        .map(|j| {
            if j == n - 1 {
                1.0
            } else {
                10f64.powf(-3.0 + 3.0 * j as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

pub const DEFAULT_TOP_P: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub n: usize,
    pub origin: WeightOrigin,
    pub transform_exponent: f64,
    /// `(p, C(p))`: share of total weight carried by the largest `ceil(pN)` weights.
    pub lorenz: Vec<(f64, f64)>,
    /// `1 / (N sum w~_i^2)`, in `(0, 1]`; often reported as ESS/N.
    pub kappa_n: f64,
    /// `(p, S_p)` for each requested top share.
    pub top_share: Vec<(f64, f64)>,
    /// `1 / kappa_n - 1`, which estimates `rho^-2 - 1` for half-order weights.
    pub cv_half_sq: Option<f64>,
    /// Largest normalized weight.
    pub max_weight: f64,
}

impl WeightDiagnostics {
    /// `p,C` rows.
    pub fn lorenz_csv(&self) -> String {
        let mut s = String::from("p,C\n");
        for (p, c) in &self.lorenz {
            s.push_str(&format!("{},{}\n", csv_float(*p), csv_float(*c)));
        }
        s
    }

    /// `name,value` rows for the scalar summaries.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("name,value\n");
        s.push_str(&format!("n,{}\n", self.n));
        s.push_str(&format!(
            "transform_exponent,{}\n",
            csv_float(self.transform_exponent)
        ));
        s.push_str(&format!("kappa_n,{}\n", csv_float(self.kappa_n)));
        for (p, v) in &self.top_share {
            s.push_str(&format!("top_share_{},{}\n", csv_float(*p), csv_float(*v)));
        }
        s.push_str(&format!(
            "cv_half_sq,{}\n",
            self.cv_half_sq.map_or(String::new(), csv_float)
        ));
        s.push_str(&format!("max_weight,{}\n", csv_float(self.max_weight)));
        s
    }
}

/// Number of terms in `C(p)`: `ceil(pN)` clamped to `[1, N]`, with a relative
/// slack so that `p N` landing a hair above an integer does not add a term.
fn prefix_len(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    ((x * (1.0 - 1e-12)).ceil() as usize).clamp(1, n)
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(HalfordError::param("p", p, "must lie in (0, 1]"))
    }
}

pub fn normalize_and_diagnose(
    wv: &WeightVector,
    p_grid: &[f64],
    top_p: &[f64],
) -> Result<WeightDiagnostics> {
    let n = wv.log_weights.len();
    if n == 0 {
        return Err(HalfordError::Input("empty weight vector".into()));
    }
    if let Some(&bad) = wv
        .log_weights
        .iter()
        .find(|v| v.is_nan() || **v == f64::INFINITY)
    {
        return Err(HalfordError::Input(format!(
            "log weight {bad} is not usable"
        )));
    }
    for &p in p_grid.iter().chain(top_p) {
        check_p(p)?;
    }
    let mut lw = wv.log_weights.clone();
    lw.sort_by(|a, b| b.total_cmp(a));
    let top = lw[0];
    if top == f64::NEG_INFINITY {
        return Err(HalfordError::Input("all weights are zero".into()));
    }
    let e: Vec<f64> = lw.iter().map(|v| (v - top).exp()).collect();

    let mut prefix = Vec::with_capacity(n);
    let mut acc = NeumaierSum::default();
    let mut sq = NeumaierSum::default();
    for &v in &e {
        acc.add(v);
        sq.add(v * v);
        prefix.push(acc.value());
    }
    let total = prefix[n - 1];
    let share = |p: f64| prefix[prefix_len(p, n) - 1] / total;

    let kappa_n = (total * total / (n as f64 * sq.value())).min(1.0);
    Ok(WeightDiagnostics {
        n,
        origin: wv.origin,
        transform_exponent: wv.transform_exponent,
        lorenz: p_grid.iter().map(|&p| (p, share(p))).collect(),
        kappa_n,
        top_share: top_p.iter().map(|&p| (p, share(p))).collect(),
        cv_half_sq: (wv.transform_exponent == 0.5).then(|| 1.0 / kappa_n - 1.0),
        max_weight: e[0] / total,
    })
}

/// Diagnostics with the default Lorenz grid and `S_0.01`.
pub fn diagnose(wv: &WeightVector) -> Result<WeightDiagnostics> {
    normalize_and_diagnose(wv, &default_lorenz_grid(), &[DEFAULT_TOP_P])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfOrderSummary {
    pub rho_hat: f64,
    /// `rho_hat^-2 - 1`.
    pub cv_half_sq: f64,
    /// Sample variance of the transform over `rho_hat^2`.
    pub cv_sample_sq: f64,
    /// `sqrt((1 - rho_hat^2) / N)`.
    pub se: f64,
}

/// `rho` from half-order weights built on the normalized ratio `W = p1 / p2`.
pub fn half_order_overlap_from_weights(wv: &WeightVector) -> Result<HalfOrderSummary> {
    if wv.transform_exponent != 0.5 {
        return Err(HalfordError::Contract(format!(
            "half-order summary needs transform exponent 1/2, got {}",
            wv.transform_exponent
        )));
    }
    let n = wv.log_weights.len();
    if n < 2 {
        return Err(HalfordError::Input("need at least 2 weights".into()));
    }
    let mut lw = wv.log_weights.clone();
    lw.sort_by(|a, b| b.total_cmp(a));
    let mut s = NeumaierSum::default();
    let mut s2 = NeumaierSum::default();
    for v in &lw {
        let x = v.exp();
        s.add(x);
        s2.add(x * x);
    }
    let rho_hat = s.value() / n as f64;
    let var = ((s2.value() - n as f64 * rho_hat * rho_hat) / (n - 1) as f64).max(0.0);
    Ok(HalfOrderSummary {
        rho_hat,
        cv_half_sq: 1.0 / (rho_hat * rho_hat) - 1.0,
        cv_sample_sq: var / (rho_hat * rho_hat),
        se: ((1.0 - rho_hat * rho_hat).max(0.0) / n as f64).sqrt(),
    })
}

/// `log W` at `n` draws from the side named by `origin`.
pub fn sample_log_ratios(
    pair: &ModelPair,
    origin: WeightOrigin,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let id = match origin {
        WeightOrigin::ProposalSide => STREAM_H2,
        WeightOrigin::TargetSide => STREAM_H1,
    };
    pair.draw_log_bayes_factors(origin.side(), n, &mut Stream::new(seed, id))
}

/// Draws `n` observations from the side named by `origin`, returning
/// order-`t` weights.
pub fn sample_weights(
    pair: &ModelPair,
    t: f64,
    origin: WeightOrigin,
    n: usize,
    seed: u64,
) -> Result<WeightVector> {
    let lb = sample_log_ratios(pair, origin, n, seed)?;
    Ok(WeightVector::from_log_ratios(&lb, origin, t))
}

/// Diagnostics of order-`t` weights; shows how concentration depends on `t`.
pub fn fragility_demo(
    pair: &ModelPair,
    t: f64,
    origin: WeightOrigin,
    n: usize,
    seed: u64,
) -> Result<WeightDiagnostics> {
    diagnose(&sample_weights(pair, t, origin, n, seed)?)
}
