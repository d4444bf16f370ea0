//! Replicated simulation studies.
//!
//! Replication `i` of a study uses seed `derive_seed(root_seed, i)` (see
//! [`crate::stream`]), so outputs depend only on the configuration and never
//! on thread scheduling. Replications run on a rayon pool and are aggregated
//! in index order.
//!
//! Studies:
//!
//! * `sim1a`: binomial point null with the simulator matching the evaluated prior. Per replication and
//!   per `n`, `m` draws from each model feed five discrepancies: the
//!   half-order `Delta`, the forward and reverse order-1 checks and the forward
//!   and reverse two-sided order-2 checks. Running versions of three of them
//!   are tracked on a log-spaced grid for fan charts.
//! * `sim1b`: as `sim1a` with the H1 simulator drawing `theta ~ Beta(1.2, 1.2)`.
//! * `sim3`: `log10(r_hat / r)` for the half-order bridge and the forward and
//!   reverse importance-sampling estimators on the Beta(a, 1) vs uniform pair.
//! * `sim-weights`: weight concentration for a tail-sensitive exponent and the
//!   half-order exponent on the same family.
//! * `custom`: two-sided checks at user exponents, both orientations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::{
    estimate_forward_is, estimate_half_order_bridge, estimate_reverse_is, predict_bridge_rsd,
    UnnormalizedPair,
};
use crate::error::{HalfordError, Result};
use crate::families::{
    make_beta_unit_pair, make_binomial_pair, BetaUnitSpec, BinomialPointNullSpec, ModelPair,
};
use crate::goodcheck::{
    balanced_split, evaluate_moment_check, running_discrepancy_from_sample, CheckPlan,
    GoodCheckReport, LogBfSample, Sides,
};
use crate::stats::{csv_float, quantile_sorted};
use crate::stream::{derive_seed, STREAM_H1, STREAM_H2};
use crate::weights::{
    default_lorenz_grid, normalize_and_diagnose, sample_log_ratios, WeightOrigin, WeightVector,
    DEFAULT_TOP_P,
};

pub const DEFAULT_ROOT_SEED: u64 = 0x4841_4C46;
pub const DEFAULT_REPLICATIONS: usize = 500;
pub const DEFAULT_BUDGET: usize = 2000;
pub const DEFAULT_FAN_POINTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StudyId {
    #[serde(rename = "sim1a")]
    Sim1a,
    #[serde(rename = "sim1b")]
    Sim1b,
    #[serde(rename = "sim3")]
    Sim3,
    #[serde(rename = "sim-weights")]
    SimWeights,
    #[serde(rename = "custom")]
    Custom,
}

impl StudyId {
    pub fn name(self) -> &'static str {
        match self {
            StudyId::Sim1a => "sim1a",
            StudyId::Sim1b => "sim1b",
            StudyId::Sim3 => "sim3",
            StudyId::SimWeights => "sim-weights",
            StudyId::Custom => "custom",
        }
    }
}

impl std::str::FromStr for StudyId {
    type Err = HalfordError;
    fn from_str(s: &str) -> Result<Self> {
        [
            StudyId::Sim1a,
            StudyId::Sim1b,
            StudyId::Sim3,
            StudyId::SimWeights,
            StudyId::Custom,
        ]
        .into_iter()
        .find(|id| id.name() == s)
        .ok_or_else(|| {
            HalfordError::Input(format!(
                "unknown study `{s}` (expected sim1a, sim1b, sim3, sim-weights, custom)"
            ))
        })
    }
}

/// Study configuration. `budget` is the per-model draw count `m` for the
/// binomial studies and the matched total `N` for `sim3` and `sim-weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study: StudyId,
    pub replications: usize,
    pub budget: usize,
    /// Binomial trial counts (`sim1a`, `sim1b`, `custom`).
    pub n_values: Vec<u64>,
    /// Beta(a, 1) shapes (`sim3`, `sim-weights`).
    pub a_values: Vec<f64>,
    /// Exponents for `custom`.
    pub exponents: Vec<f64>,
    /// H1 simulator prior `Beta(alpha, beta)` when it differs from the evaluator.
    pub simulator: Option<(f64, f64)>,
    /// Binomial `n` whose running discrepancies feed the fan charts.
    pub fan_n: Option<u64>,
    pub fan_points: usize,
    pub root_seed: u64,
    /// Also render SVG plots.
    pub plots: bool,
}

impl StudyConfig {
    /// Defaults for `study`.
    pub fn new(study: StudyId) -> Self {
        let binomial = matches!(study, StudyId::Sim1a | StudyId::Sim1b | StudyId::Custom);
        StudyConfig {
            study,
            replications: if study == StudyId::Sim3 {
                2000
            } else {
                DEFAULT_REPLICATIONS
            },
            budget: DEFAULT_BUDGET,
            n_values: if binomial { vec![10, 50, 100] } else { vec![] },
            a_values: if binomial { vec![] } else { vec![0.5, 3.0] },
            exponents: if study == StudyId::Custom {
                vec![0.5, 1.0, 2.0]
            } else {
                vec![]
            },
            simulator: (study == StudyId::Sim1b).then_some((1.2, 1.2)),
            fan_n: matches!(study, StudyId::Sim1a | StudyId::Sim1b).then_some(50),
            fan_points: DEFAULT_FAN_POINTS,
            root_seed: DEFAULT_ROOT_SEED,
            plots: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(HalfordError::Plan(m));
        if self.replications == 0 {
            return err("replications must be >= 1".into());
        }
        let min_budget = if self.study == StudyId::Sim3 { 4 } else { 2 };
        if self.budget < min_budget {
            return err(format!(
                "budget must be >= {min_budget} for {}",
                self.study.name()
            ));
        }
        match self.study {
            StudyId::Sim1a | StudyId::Sim1b | StudyId::Custom => {
                if self.n_values.is_empty() || self.n_values.contains(&0) {
                    return err("n_values must be a non-empty list of positive integers".into());
                }
                if self.study == StudyId::Custom && self.exponents.iter().any(|t| !t.is_finite()) {
                    return err("exponents must be finite".into());
                }
                if self.study == StudyId::Custom && self.exponents.is_empty() {
                    return err("custom study needs at least one exponent".into());
                }
            }
            StudyId::Sim3 | StudyId::SimWeights => {
                if self.a_values.is_empty()
                    || self.a_values.iter().any(|a| !(*a > 0.0 && a.is_finite()))
                {
                    return err("a_values must be a non-empty list of positive numbers".into());
                }
            }
        }
        if let Some((a, b)) = self.simulator {
            if !(a > 0.0 && b > 0.0) {
                return err("simulator prior parameters must be positive".into());
            }
        }
        if self.fan_points == 0 {
            return err("fan_points must be >= 1".into());
        }
        Ok(())
    }

    fn binomial_spec(&self, n: u64) -> BinomialPointNullSpec {
        let spec = BinomialPointNullSpec::uniform(n);
        match self.simulator {
            Some((a, b)) => spec.with_simulator(a, b),
            None => spec,
        }
    }
}

/// Replicate summary for one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub column: String,
    /// `n` for binomial studies, `a` for Beta(a, 1) studies.
    pub param: f64,
    #[serde(with = "crate::stats::ext_real_serde")]
    pub mean: f64,
    #[serde(with = "crate::stats::opt_ext_real_serde")]
    pub sd: Option<f64>,
    pub q01: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub q99: f64,
    pub min: f64,
    pub max: f64,
    /// Per-draw transforms that exceeded `f64::MAX`, summed over replications.
    pub overflow_transforms: u64,
    /// Replications with at least one overflowed transform.
    pub overflow_replications: usize,
    /// Range of the per-draw transforms, log10 scale, over all replications.
    pub transform_log10_min: Option<f64>,
    pub transform_log10_max: Option<f64>,
    /// Per-replication values, in replication order.
    #[serde(skip)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanPoint {
    pub m: usize,
    pub mean: f64,
    pub lo50: f64,
    pub hi50: f64,
    pub lo90: f64,
    pub hi90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanPanel {
    pub panel: String,
    pub title: String,
    pub param: f64,
    pub points: Vec<FanPoint>,
    pub detection_time: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub arm: String,
    pub param: f64,
    /// `(lo, hi, count)`.
    pub bins: Vec<(f64, f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzBand {
    pub arm: String,
    pub param: f64,
    /// `(p, median, q10, q90)`.
    pub points: Vec<(f64, f64, f64, f64)>,
}

/// Closed-form references for `sim3` and `sim-weights`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReference {
    pub a: f64,
    pub rho_sq: f64,
    pub predicted_bridge_rsd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub cells: Vec<CellSummary>,
    pub fans: Vec<FanPanel>,
    pub histograms: Vec<Histogram>,
    pub lorenz: Vec<LorenzBand>,
    pub references: Vec<OverlapReference>,
}

impl StudyResult {
    pub fn cell(&self, column: &str, param: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.column == column && c.param == param)
    }

    pub fn fan(&self, panel: &str) -> Option<&FanPanel> {
        self.fans.iter().find(|f| f.panel == panel)
    }
}

/// Column names of the binomial tables, in table order.
pub const SIM1_COLUMNS: [&str; 5] = [
    "delta_half",
    "turing_fwd",
    "turing_rev",
    "good_fwd",
    "good_rev",
];

/// `count` log-spaced integers from `min(10, max)` to `max`, deduplicated.
pub fn log_grid(max: usize, count: usize) -> Vec<usize> {
    let lo = 10usize.min(max).max(1);
    if count <= 1 || lo == max {
        return vec![max];
    }
    let ratio = (max as f64 / lo as f64).ln();
    let mut g: Vec<usize> = (0..count)
        .map(|j| {
            if j == count - 1 {
                max
            } else {
                ((lo as f64) * (ratio * j as f64 / (count - 1) as f64).exp()).round() as usize
            }
        })
        .collect();
    g.dedup();
    g
}

/// First grid point whose central 90% band excludes zero.
pub fn detection_time(points: &[FanPoint]) -> Option<usize> {
    points
        .iter()
        .find(|p| p.lo90 > 0.0 || p.hi90 < 0.0)
        .map(|p| p.m)
}

/// Detection time of every fan panel, in panel order.
pub fn detection_time_scan(result: &StudyResult) -> Vec<(String, Option<usize>)> {
    result
        .fans
        .iter()
        .map(|f| (f.panel.clone(), detection_time(&f.points)))
        .collect()
}

/// Per-replication value of one cell.
#[derive(Debug, Clone, Copy)]
struct CellValue {
    value: f64,
    overflow: u64,
    log_min: f64,
    log_max: f64,
}

impl CellValue {
    fn plain(value: f64) -> Self {
        CellValue {
            value,
            overflow: 0,
            log_min: f64::NAN,
            log_max: f64::NAN,
        }
    }

    fn from_report(r: &GoodCheckReport) -> Self {
        let sides = [r.side1, r.side2];
        let sides = sides.iter().flatten();
        CellValue {
            value: r.delta.unwrap_or(f64::NAN),
            overflow: sides.clone().map(|s| s.overflow_count).sum(),
            log_min: sides
                .clone()
                .map(|s| s.min_log_value)
                .fold(f64::INFINITY, f64::min),
            log_max: sides
                .map(|s| s.max_log_value)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Default)]
struct Replicate {
    /// `(column, param)` → value, in a fixed order.
    cells: Vec<(String, f64, CellValue)>,
    /// Fan / Lorenz traces: `(name, param, values)`.
    traces: Vec<(String, f64, Vec<f64>)>,
}

fn summarize_cell(column: String, param: f64, vals: &[CellValue]) -> CellSummary {
    let values: Vec<f64> = vals.iter().map(|v| v.value).collect();
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let (mean, sd) = mean_sd_ext(&sorted);
    let q = |p: f64| {
        if sorted.is_empty() {
            f64::NAN
        } else {
            quantile_sorted(&sorted, p)
        }
    };
    let finite_log = |f: fn(&CellValue) -> f64| vals.iter().map(f).filter(|v| !v.is_nan());
    let log10 = std::f64::consts::LN_10;
    CellSummary {
        column,
        param,
        mean,
        sd,
        q01: q(0.01),
        q05: q(0.05),
        q50: q(0.5),
        q95: q(0.95),
        q99: q(0.99),
        min: sorted.first().copied().unwrap_or(f64::NAN),
        max: sorted.last().copied().unwrap_or(f64::NAN),
        overflow_transforms: vals.iter().map(|v| v.overflow).sum(),
        overflow_replications: vals.iter().filter(|v| v.overflow > 0).count(),
        transform_log10_min: finite_log(|v| v.log_min)
            .reduce(f64::min)
            .map(|v| v / log10),
        transform_log10_max: finite_log(|v| v.log_max)
            .reduce(f64::max)
            .map(|v| v / log10),
        values,
    }
}

/// Mean and SD allowing infinite entries: an infinite entry makes the mean
/// that infinity (or NaN for mixed signs) and the SD infinite.
fn mean_sd_ext(xs: &[f64]) -> (f64, Option<f64>) {
    if xs.iter().all(|v| v.is_finite()) {
        return crate::stats::mean_sd(xs);
    }
    let pos = xs.iter().any(|v| *v == f64::INFINITY);
    let neg = xs.iter().any(|v| *v == f64::NEG_INFINITY);
    let mean = match (pos, neg) {
        (true, false) => f64::INFINITY,
        (false, true) => f64::NEG_INFINITY,
        _ => f64::NAN,
    };
    (mean, (xs.len() >= 2).then_some(f64::INFINITY))
}

fn fan_points(grid: &[usize], traces: &[&[f64]]) -> Vec<FanPoint> {
    grid.iter()
        .enumerate()
        .map(|(j, &m)| {
            let mut v: Vec<f64> = traces.iter().map(|t| t[j]).collect();
            v.sort_by(f64::total_cmp);
            FanPoint {
                m,
                mean: mean_sd_ext(&v).0,
                lo50: quantile_sorted(&v, 0.25),
                hi50: quantile_sorted(&v, 0.75),
                lo90: quantile_sorted(&v, 0.05),
                hi90: quantile_sorted(&v, 0.95),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Per-replication kernels

fn sim1_replicate(
    cfg: &StudyConfig,
    pairs: &[(u64, ModelPair)],
    grid: &[usize],
    seed: u64,
) -> Result<Replicate> {
    let m = cfg.budget;
    let mut rep = Replicate::default();
    let plan = |t: f64, sides: Sides| {
        CheckPlan::half_order(m, m, seed)
            .with_t(t)
            .with_sides(sides)
    };
    for (n, pair) in pairs {
        let sample = LogBfSample::draw(pair, m, m, seed, [STREAM_H1, STREAM_H2])?;
        let swapped = sample.swapped();
        let half = plan(0.5, Sides::TwoSided);
        let turing = plan(1.0, Sides::OneSidedFromH2);
        let good = plan(2.0, Sides::TwoSided);
        let reports = [
            evaluate_moment_check(&sample, &half, None)?,
            evaluate_moment_check(&sample, &turing, Some(1.0))?,
            evaluate_moment_check(&swapped, &turing, Some(1.0))?,
            evaluate_moment_check(&sample, &good, None)?,
            evaluate_moment_check(&swapped, &good, None)?,
        ];
        for (col, r) in SIM1_COLUMNS.iter().zip(&reports) {
            rep.cells
                .push((col.to_string(), *n as f64, CellValue::from_report(r)));
        }
        if cfg.fan_n == Some(*n) {
            let traces = [
                (
                    "A",
                    running_discrepancy_from_sample(&sample, &half, None, grid)?,
                ),
                (
                    "B",
                    running_discrepancy_from_sample(&swapped, &turing, Some(1.0), grid)?,
                ),
                (
                    "C",
                    running_discrepancy_from_sample(&swapped, &good, None, grid)?,
                ),
            ];
            for (panel, tr) in traces {
                rep.traces.push((
                    panel.to_string(),
                    *n as f64,
                    tr.into_iter().map(|p| p.1).collect(),
                ));
            }
        }
    }
    Ok(rep)
}

fn custom_replicate(cfg: &StudyConfig, pairs: &[(u64, ModelPair)], seed: u64) -> Result<Replicate> {
    let m = cfg.budget;
    let mut rep = Replicate::default();
    for (n, pair) in pairs {
        let sample = LogBfSample::draw(pair, m, m, seed, [STREAM_H1, STREAM_H2])?;
        let swapped = sample.swapped();
        for &t in &cfg.exponents {
            let plan = CheckPlan::half_order(m, m, seed).with_t(t);
            let fwd = evaluate_moment_check(&sample, &plan, None)?;
            let rev = evaluate_moment_check(&swapped, &plan, None)?;
            rep.cells.push((
                format!("delta[t={t}]"),
                *n as f64,
                CellValue::from_report(&fwd),
            ));
            rep.cells.push((
                format!("delta_swapped[t={t}]"),
                *n as f64,
                CellValue::from_report(&rev),
            ));
        }
    }
    Ok(rep)
}

fn sim3_replicate(
    cfg: &StudyConfig,
    pairs: &[(f64, UnnormalizedPair)],
    seed: u64,
) -> Result<Replicate> {
    let n = cfg.budget;
    let (m1, m2) = balanced_split(n);
    let mut rep = Replicate::default();
    for (a, pair) in pairs {
        let r = pair.true_ratio.unwrap_or(1.0);
        let log10 = |x: f64| (x / r).log10();
        let b = estimate_half_order_bridge(pair, m1, m2, seed)?;
        let f = estimate_forward_is(pair, n, seed)?;
        let v = estimate_reverse_is(pair, n, seed)?;
        rep.cells.push((
            "bridge".into(),
            *a,
            CellValue::plain((b.log_r_hat - r.ln()) / std::f64::consts::LN_10),
        ));
        rep.cells.push((
            "forward".into(),
            *a,
            CellValue {
                overflow: f.overflow_count,
                ..CellValue::plain(log10(f.r_hat))
            },
        ));
        rep.cells.push((
            "reverse".into(),
            *a,
            CellValue {
                overflow: v.overflow_count,
                ..CellValue::plain(log10(v.r_hat))
            },
        ));
    }
    Ok(rep)
}

/// `(origin, tail-sensitive t)` for a Beta(a, 1) weight stress test.
pub fn weight_arm(a: f64) -> (WeightOrigin, f64) {
    if a <= 1.0 {
        (WeightOrigin::ProposalSide, 1.0)
    } else {
        (WeightOrigin::TargetSide, 0.25)
    }
}

fn weights_replicate(
    cfg: &StudyConfig,
    pairs: &[(f64, ModelPair)],
    grid: &[f64],
    seed: u64,
) -> Result<Replicate> {
    let mut rep = Replicate::default();
    for (a, pair) in pairs {
        let (origin, t_bad) = weight_arm(*a);
        // Both exponents reuse the same draws.
        let log_w = sample_log_ratios(pair, origin, cfg.budget, seed)?;
        for t in [t_bad, 0.5] {
            let wv = WeightVector::from_log_ratios(&log_w, origin, t);
            let d = normalize_and_diagnose(&wv, grid, &[DEFAULT_TOP_P])?;
            rep.cells
                .push((format!("kappa_n[t={t}]"), *a, CellValue::plain(d.kappa_n)));
            rep.cells.push((
                format!("top_share_0.01[t={t}]"),
                *a,
                CellValue::plain(d.top_share[0].1),
            ));
            rep.traces.push((
                format!("lorenz[t={t}]"),
                *a,
                d.lorenz.iter().map(|p| p.1).collect(),
            ));
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------

/// Runs a study on the current rayon pool.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let reps = config.replications;
    let seeds: Vec<u64> = (0..reps as u64)
        .map(|i| derive_seed(config.root_seed, i))
        .collect();

    let run = |kernel: &(dyn Fn(u64) -> Result<Replicate> + Sync)| -> Result<Vec<Replicate>> {
        let out: Vec<Result<Replicate>> = seeds.par_iter().map(|&s| kernel(s)).collect();
        out.into_iter()
            .enumerate()
            .map(|(index, r)| {
                r.map_err(|e| HalfordError::Replication {
                    index,
                    seed: seeds[index],
                    source: Box::new(e),
                })
            })
            .collect()
    };

    let mut fan_grid: Vec<usize> = Vec::new();
    let mut lorenz_grid: Vec<f64> = Vec::new();
    let mut references = Vec::new();
    let replicates = match config.study {
        StudyId::Sim1a | StudyId::Sim1b | StudyId::Custom => {
            let pairs = config
                .n_values
                .iter()
                .map(|&n| Ok((n, make_binomial_pair(&config.binomial_spec(n))?)))
                .collect::<Result<Vec<_>>>()?;
            if config.study == StudyId::Custom {
                run(&|s| custom_replicate(config, &pairs, s))?
            } else {
                fan_grid = log_grid(config.budget, config.fan_points);
                run(&|s| sim1_replicate(config, &pairs, &fan_grid, s))?
            }
        }
        StudyId::Sim3 => {
            let (m1, m2) = balanced_split(config.budget);
            let pairs = config
                .a_values
                .iter()
                .map(|&a| {
                    let spec = BetaUnitSpec { a };
                    references.push(OverlapReference {
                        a,
                        rho_sq: spec.rho_squared(),
                        predicted_bridge_rsd: predict_bridge_rsd(spec.rho(), m1, m2)?,
                    });
                    Ok((a, UnnormalizedPair::normalized(make_beta_unit_pair(&spec)?)))
                })
                .collect::<Result<Vec<_>>>()?;
            run(&|s| sim3_replicate(config, &pairs, s))?
        }
        StudyId::SimWeights => {
            lorenz_grid = default_lorenz_grid();
            let pairs = config
                .a_values
                .iter()
                .map(|&a| {
                    let spec = BetaUnitSpec { a };
                    references.push(OverlapReference {
                        a,
                        rho_sq: spec.rho_squared(),
                        predicted_bridge_rsd: predict_bridge_rsd(
                            spec.rho(),
                            config.budget / 2,
                            config.budget / 2,
                        )?,
                    });
                    Ok((a, make_beta_unit_pair(&spec)?))
                })
                .collect::<Result<Vec<_>>>()?;
            run(&|s| weights_replicate(config, &pairs, &lorenz_grid, s))?
        }
    };

    // Aggregate in replication order; every replicate has the same layout.
    let first = &replicates[0];
    let cells = (0..first.cells.len())
        .map(|k| {
            let (col, param, _) = &first.cells[k];
            let vals: Vec<CellValue> = replicates.iter().map(|r| r.cells[k].2).collect();
            summarize_cell(col.clone(), *param, &vals)
        })
        .collect::<Vec<_>>();

    let mut fans = Vec::new();
    let mut lorenz = Vec::new();
    for k in 0..first.traces.len() {
        let (name, param, _) = &first.traces[k];
        let traces: Vec<&[f64]> = replicates
            .iter()
            .map(|r| r.traces[k].2.as_slice())
            .collect();
        if config.study == StudyId::SimWeights {
            let points = lorenz_grid
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let mut v: Vec<f64> = traces.iter().map(|t| t[j]).collect();
                    v.sort_by(f64::total_cmp);
                    (
                        p,
                        quantile_sorted(&v, 0.5),
                        quantile_sorted(&v, 0.1),
                        quantile_sorted(&v, 0.9),
                    )
                })
                .collect();
            lorenz.push(LorenzBand {
                arm: name.clone(),
                param: *param,
                points,
            });
        } else {
            let points = fan_points(&fan_grid, &traces);
            let title = match name.as_str() {
                "A" => "half-order Delta(m)",
                "B" => "reverse Turing E_H1[1/B] - 1",
                _ => "reverse Good E_H1[B^-2] - E_H2[1/B]",
            };
            fans.push(FanPanel {
                panel: name.clone(),
                title: title.into(),
                param: *param,
                detection_time: detection_time(&points),
                points,
            });
        }
    }

    let histograms = if config.study == StudyId::Sim3 {
        sim3_histograms(&cells)
    } else {
        Vec::new()
    };

    Ok(StudyResult {
        config: config.clone(),
        cells,
        fans,
        histograms,
        lorenz,
        references,
    })
}

/// Runs a study on a dedicated pool of `threads` workers.
pub fn run_study_with_threads(config: &StudyConfig, threads: usize) -> Result<StudyResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| {
            HalfordError::Plan(format!("cannot build a pool of {threads} threads: {e}"))
        })?;
    pool.install(|| run_study(config))
}

const HISTOGRAM_BINS: usize = 60;

/// Common bins across arms for each `a`.
fn sim3_histograms(cells: &[CellSummary]) -> Vec<Histogram> {
    let mut out = Vec::new();
    let mut params: Vec<f64> = cells.iter().map(|c| c.param).collect();
    params.dedup();
    for a in params {
        let arms: Vec<&CellSummary> = cells.iter().filter(|c| c.param == a).collect();
        let finite = || {
            arms.iter()
                .flat_map(|c| c.values.iter().copied())
                .filter(|v| v.is_finite())
        };
        let (lo, hi) = match (finite().reduce(f64::min), finite().reduce(f64::max)) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => continue,
        };
        let width = if hi > lo {
            (hi - lo) / HISTOGRAM_BINS as f64
        } else {
            1.0
        };
        for c in arms {
            let mut counts = vec![0usize; HISTOGRAM_BINS];
            for v in c.values.iter().filter(|v| v.is_finite()) {
                let k = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
                counts[k] += 1;
            }
            out.push(Histogram {
                arm: c.column.clone(),
                param: a,
                bins: counts
                    .into_iter()
                    .enumerate()
                    .map(|(k, n)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, n))
                    .collect(),
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Output

fn opt_csv(v: Option<f64>) -> String {
    v.map_or(String::new(), csv_float)
}

/// Tidy per-cell summary.
pub fn summary_csv(result: &StudyResult) -> String {
    let param = if result.config.a_values.is_empty() {
        "n"
    } else {
        "a"
    };
    let mut s = format!(
        "column,{param},mean,sd,q01,q05,q50,q95,q99,min,max,overflow_transforms,overflow_replications,transform_log10_min,transform_log10_max\n"
    );
    for c in &result.cells {
        let row = [
            c.column.clone(),
            csv_float(c.param),
            csv_float(c.mean),
            opt_csv(c.sd),
            csv_float(c.q01),
            csv_float(c.q05),
            csv_float(c.q50),
            csv_float(c.q95),
            csv_float(c.q99),
            csv_float(c.min),
            csv_float(c.max),
            c.overflow_transforms.to_string(),
            c.overflow_replications.to_string(),
            opt_csv(c.transform_log10_min),
            opt_csv(c.transform_log10_max),
        ];
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Binomial results laid out as rows of `n` with a Mean and SD column per
/// discrepancy.
pub fn wide_table_csv(result: &StudyResult) -> String {
    let mut columns: Vec<&str> = Vec::new();
    for c in &result.cells {
        if !columns.contains(&c.column.as_str()) {
            columns.push(&c.column);
        }
    }
    let mut s = String::from("n");
    for c in &columns {
        s.push_str(&format!(",{c}_mean,{c}_sd"));
    }
    s.push('\n');
    for &n in &result.config.n_values {
        s.push_str(&n.to_string());
        for col in &columns {
            let cell = result.cell(col, n as f64);
            s.push(',');
            s.push_str(&cell.map_or(String::new(), |c| csv_float(c.mean)));
            s.push(',');
            s.push_str(&cell.map_or(String::new(), |c| opt_csv(c.sd)));
        }
        s.push('\n');
    }
    s
}

pub fn fans_csv(result: &StudyResult) -> String {
    let mut s = String::from("panel,m,mean,lo50,hi50,lo90,hi90\n");
    for f in &result.fans {
        for p in &f.points {
            let row = [p.mean, p.lo50, p.hi50, p.lo90, p.hi90]
                .map(csv_float)
                .join(",");
            s.push_str(&format!("{},{},{}\n", f.panel, p.m, row));
        }
    }
    s
}

pub fn detection_csv(result: &StudyResult) -> String {
    let mut s = String::from("panel,n,detection_time\n");
    for f in &result.fans {
        let d = f.detection_time.map_or(String::new(), |m| m.to_string());
        s.push_str(&format!("{},{},{}\n", f.panel, csv_float(f.param), d));
    }
    s
}

pub fn lorenz_csv(result: &StudyResult) -> String {
    let mut s = String::from("arm,a,p,median,lo10,hi90\n");
    for l in &result.lorenz {
        for &(p, med, lo, hi) in &l.points {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                l.arm,
                csv_float(l.param),
                csv_float(p),
                csv_float(med),
                csv_float(lo),
                csv_float(hi)
            ));
        }
    }
    s
}

pub fn histogram_csv(result: &StudyResult) -> String {
    let mut s = String::from("arm,a,bin_lo,bin_hi,count\n");
    for h in &result.histograms {
        for &(lo, hi, n) in &h.bins {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                h.arm,
                csv_float(h.param),
                csv_float(lo),
                csv_float(hi),
                n
            ));
        }
    }
    s
}

pub fn references_csv(result: &StudyResult) -> String {
    let mut s = String::from("a,rho_sq,predicted_bridge_rsd\n");
    for r in &result.references {
        s.push_str(&format!(
            "{},{},{}\n",
            csv_float(r.a),
            csv_float(r.rho_sq),
            csv_float(r.predicted_bridge_rsd)
        ));
    }
    s
}

/// Plot-data files relative to the study directory, with their contents.
pub fn emit_plot_data(result: &StudyResult, format: &str) -> Result<Vec<(PathBuf, String)>> {
    match format {
        "csv" => {
            let mut files = Vec::new();
            if !result.fans.is_empty() {
                files.push((PathBuf::from("fans/fans.csv"), fans_csv(result)));
                files.push((PathBuf::from("fans/detection.csv"), detection_csv(result)));
            }
            if !result.lorenz.is_empty() {
                files.push((PathBuf::from("fans/lorenz.csv"), lorenz_csv(result)));
            }
            if !result.histograms.is_empty() {
                files.push((PathBuf::from("fans/histogram.csv"), histogram_csv(result)));
            }
            Ok(files)
        }
        "svg" => Ok(crate::plot::render_all(result)),
        other => Err(HalfordError::Format(other.to_string())),
    }
}

/// Every output file of a study, relative to `<outdir>/<study>/`.
pub fn study_files(result: &StudyResult) -> Result<Vec<(PathBuf, String)>> {
    let mut files = vec![(PathBuf::from("tables/summary.csv"), summary_csv(result))];
    match result.config.study {
        StudyId::Sim1a | StudyId::Sim1b | StudyId::Custom => {
            files.push((PathBuf::from("tables/table.csv"), wide_table_csv(result)));
        }
        StudyId::Sim3 | StudyId::SimWeights => {
            files.push((
                PathBuf::from("tables/references.csv"),
                references_csv(result),
            ));
        }
    }
    files.extend(emit_plot_data(result, "csv")?);
    if result.config.plots {
        files.extend(emit_plot_data(result, "svg")?);
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub study: String,
    pub version: String,
    pub config: StudyConfig,
    pub threads: usize,
    pub runtime_seconds: f64,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs `config` and writes `<outdir>/<study>/{tables,fans,plots}` plus
/// `manifest.json`. Returns the result and the manifest.
pub fn run_and_write(
    config: &StudyConfig,
    outdir: &Path,
    threads: Option<usize>,
) -> Result<(StudyResult, Manifest)> {
    let start = Instant::now();
    let result = match threads {
        Some(t) => run_study_with_threads(config, t)?,
        None => run_study(config)?,
    };
    let runtime = start.elapsed().as_secs_f64();
    let manifest = write_outputs(
        &result,
        outdir,
        threads.unwrap_or_else(rayon::current_num_threads),
        runtime,
    )?;
    Ok((result, manifest))
}

pub fn write_outputs(
    result: &StudyResult,
    outdir: &Path,
    threads: usize,
    runtime_seconds: f64,
) -> Result<Manifest> {
    let root = outdir.join(result.config.study.name());
    let mut entries = Vec::new();
    for (rel, content) in study_files(result)? {
        let path = root.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, &content)?;
        entries.push(ManifestEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(content.as_bytes()),
            bytes: content.len(),
        });
    }
    let manifest = Manifest {
        study: result.config.study.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: result.config.clone(),
        threads,
        runtime_seconds,
        files: entries,
    };
    std::fs::write(
        root.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
