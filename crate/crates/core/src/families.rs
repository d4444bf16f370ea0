//! Model pairs and the closed-form families used as oracles and stress tests.
//!
//! A [`ModelPair`] bundles, for each of two hypotheses, a prior-predictive
//! simulator and a log-density evaluator. Simulator and evaluator are separate
//! objects so that a pair can deliberately simulate from one model while
//! evaluating Bayes factors under another (the mismatch mode of
//! [`BinomialPointNullSpec`]).
//!
//! All densities live on the log scale. The Bayes factor is only ever handled
//! as `log B = log p1 - log p2`.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Beta, Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{HalfordError, Result, SideId};
use crate::stream::Stream;

/// Draws one observation from a generating model.
pub trait Sampler: Send + Sync + fmt::Debug {
    fn draw(&self, stream: &mut Stream) -> f64;
}

/// Natural-log density (or probability mass) of an observation.
pub trait LogDensity: Send + Sync + fmt::Debug {
    fn log_density(&self, x: f64) -> f64;
}

/// Adapts a closure into a [`Sampler`].
pub struct FnSampler<F>(pub F);

impl<F: Fn(&mut Stream) -> f64 + Send + Sync> Sampler for FnSampler<F> {
    fn draw(&self, stream: &mut Stream) -> f64 {
        (self.0)(stream)
    }
}

impl<F> fmt::Debug for FnSampler<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnSampler")
    }
}

/// Adapts a closure into a [`LogDensity`].
pub struct FnDensity<F>(pub F);

impl<F: Fn(f64) -> f64 + Send + Sync> LogDensity for FnDensity<F> {
    fn log_density(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

impl<F> fmt::Debug for FnDensity<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnDensity")
    }
}

/// Declared support of a pair, which doubles as the reference measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SupportKind {
    /// Counting measure on the atoms `0, 1, ..., size - 1`.
    FiniteDiscrete { size: usize },
    /// Lebesgue measure on the open unit interval.
    ContinuousUnitInterval,
    /// User-supplied pair; no structural knowledge.
    Abstract,
}

impl SupportKind {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            SupportKind::FiniteDiscrete { size } => x.fract() == 0.0 && x >= 0.0 && x < size as f64,
            SupportKind::ContinuousUnitInterval => x > 0.0 && x < 1.0,
            SupportKind::Abstract => !x.is_nan(),
        }
    }

    fn describe(&self) -> String {
        match *self {
            SupportKind::FiniteDiscrete { size } => format!("atoms 0..={}", size.saturating_sub(1)),
            SupportKind::ContinuousUnitInterval => "open interval (0, 1)".into(),
            SupportKind::Abstract => "abstract".into(),
        }
    }
}

/// Pairs whose Hellinger integral is known in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "form")]
pub enum AnalyticForm {
    /// `p1 = p2`, so `I(t) = 1` everywhere.
    Identical,
    /// `p1(x) = a x^(a-1)` against `p2 = 1` on (0, 1):
    /// `I(s) = a^s / (s (a - 1) + 1)` while the denominator is positive, `+inf` otherwise.
    PowerOfUniform { a: f64 },
}

impl AnalyticForm {
    pub fn hellinger(&self, t: f64) -> f64 {
        match *self {
            AnalyticForm::Identical => 1.0,
            AnalyticForm::PowerOfUniform { a } => {
                let denom = t * (a - 1.0) + 1.0;
                if denom <= 0.0 {
                    f64::INFINITY
                } else {
                    (t * a.ln()).exp() / denom
                }
            }
        }
    }
}

/// Two competing models on a common support.
#[derive(Clone)]
pub struct ModelPair {
    pub label_1: String,
    pub label_2: String,
    sampler_1: Arc<dyn Sampler>,
    sampler_2: Arc<dyn Sampler>,
    density_1: Arc<dyn LogDensity>,
    density_2: Arc<dyn LogDensity>,
    support: SupportKind,
    analytic: Option<AnalyticForm>,
    // Label swap maps I(t) to I(1 - t).
    reflected: bool,
}

impl fmt::Debug for ModelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelPair")
            .field("label_1", &self.label_1)
            .field("label_2", &self.label_2)
            .field("support", &self.support)
            .field("analytic", &self.analytic)
            .field("reflected", &self.reflected)
            .finish_non_exhaustive()
    }
}

impl ModelPair {
    pub fn new(
        label_1: impl Into<String>,
        label_2: impl Into<String>,
        side_1: (Arc<dyn Sampler>, Arc<dyn LogDensity>),
        side_2: (Arc<dyn Sampler>, Arc<dyn LogDensity>),
        support: SupportKind,
    ) -> Self {
        ModelPair {
            label_1: label_1.into(),
            label_2: label_2.into(),
            sampler_1: side_1.0,
            density_1: side_1.1,
            sampler_2: side_2.0,
            density_2: side_2.1,
            support,
            analytic: None,
            reflected: false,
        }
    }

    /// Attaches a closed-form Hellinger integral (in the pair's current orientation).
    pub fn with_analytic(mut self, form: AnalyticForm) -> Self {
        self.analytic = Some(form);
        self.reflected = false;
        self
    }

    pub fn support(&self) -> SupportKind {
        self.support
    }

    pub fn has_analytic(&self) -> bool {
        self.analytic.is_some()
    }

    /// Closed-form `I(t)` when the family provides one.
    pub fn analytic_hellinger(&self, t: f64) -> Option<f64> {
        let s = if self.reflected { 1.0 - t } else { t };
        self.analytic.map(|form| form.hellinger(s))
    }

    /// The same pair with model labels exchanged, so `B` becomes `1 / B`.
    pub fn swapped(&self) -> Self {
        ModelPair {
            label_1: self.label_2.clone(),
            label_2: self.label_1.clone(),
            sampler_1: self.sampler_2.clone(),
            sampler_2: self.sampler_1.clone(),
            density_1: self.density_2.clone(),
            density_2: self.density_1.clone(),
            support: self.support,
            analytic: self.analytic,
            reflected: !self.reflected,
        }
    }

    pub fn draw(&self, side: SideId, stream: &mut Stream) -> f64 {
        match side {
            SideId::H1 => self.sampler_1.draw(stream),
            SideId::H2 => self.sampler_2.draw(stream),
        }
    }

    pub fn log_density(&self, side: SideId, x: f64) -> f64 {
        match side {
            SideId::H1 => self.density_1.log_density(x),
            SideId::H2 => self.density_2.log_density(x),
        }
    }

    /// `log p1(x) - log p2(x)`.
    pub fn log_bayes_factor(&self, x: f64) -> Result<f64> {
        self.log_bf_at(x, None)
    }

    fn log_bf_at(&self, x: f64, draw: Option<(SideId, usize)>) -> Result<f64> {
        if !self.support.contains(x) {
            return Err(HalfordError::Support {
                x,
                support: self.support.describe(),
            });
        }
        let log_p1 = self.density_1.log_density(x);
        let log_p2 = self.density_2.log_density(x);
        if log_p1.is_finite() && log_p2.is_finite() {
            Ok(log_p1 - log_p2)
        } else {
            Err(HalfordError::AbsoluteContinuity {
                x,
                log_p1,
                log_p2,
                draw,
            })
        }
    }

    /// Draws `m` observations from `side` and returns their log Bayes factors.
    pub fn draw_log_bayes_factors(
        &self,
        side: SideId,
        m: usize,
        stream: &mut Stream,
    ) -> Result<Vec<f64>> {
        (0..m)
            .map(|i| {
                let x = self.draw(side, stream);
                self.log_bf_at(x, Some((side, i)))
            })
            .collect()
    }
}

/// Free-function form of [`ModelPair::log_bayes_factor`].
pub fn log_bayes_factor(pair: &ModelPair, x: f64) -> Result<f64> {
    pair.log_bayes_factor(x)
}

// ---------------------------------------------------------------------------
// Building blocks

/// Log probabilities over the atoms `0..len`.
#[derive(Debug, Clone)]
pub struct DiscreteLogTable {
    log_p: Vec<f64>,
}

impl DiscreteLogTable {
    pub fn new(log_p: Vec<f64>) -> Self {
        DiscreteLogTable { log_p }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.log_p
    }
}

impl LogDensity for DiscreteLogTable {
    fn log_density(&self, x: f64) -> f64 {
        if x.fract() != 0.0 || x < 0.0 {
            return f64::NEG_INFINITY;
        }
        self.log_p
            .get(x as usize)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Inverse-CDF sampler over the atoms `0..len`.
#[derive(Debug, Clone)]
pub struct TableSampler {
    cdf: Vec<f64>,
}

impl TableSampler {
    pub fn from_probabilities(p: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = p
            .iter()
            .map(|&q| {
                acc += q;
                acc
            })
            .collect();
        TableSampler { cdf }
    }
}

impl Sampler for TableSampler {
    fn draw(&self, stream: &mut Stream) -> f64 {
        let total = *self.cdf.last().expect("empty table");
        let u = stream.open01() * total;
        let k = self.cdf.partition_point(|&c| c <= u);
        k.min(self.cdf.len() - 1) as f64
    }
}

/// `y ~ Binomial(n, theta)`.
#[derive(Debug, Clone)]
pub struct BinomialSampler {
    dist: Binomial,
}

impl Sampler for BinomialSampler {
    fn draw(&self, stream: &mut Stream) -> f64 {
        self.dist.sample(stream) as f64
    }
}

/// Prior-predictive simulator `theta ~ Beta(alpha, beta)`, `y | theta ~ Binomial(n, theta)`.
#[derive(Debug, Clone)]
pub struct BetaBinomialSampler {
    n: u64,
    prior: Beta<f64>,
}

impl Sampler for BetaBinomialSampler {
    fn draw(&self, stream: &mut Stream) -> f64 {
        let theta = self.prior.sample(stream);
        Binomial::new(self.n, theta)
            .expect("Beta draw lies in [0, 1]")
            .sample(stream) as f64
    }
}

/// Density `a x^(a-1)` on (0, 1), i.e. Beta(a, 1).
#[derive(Debug, Clone, Copy)]
pub struct PowerDensity {
    pub a: f64,
}

impl LogDensity for PowerDensity {
    fn log_density(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        if self.a == 1.0 {
            0.0
        } else {
            self.a.ln() + (self.a - 1.0) * x.ln()
        }
    }
}

/// Inverse-CDF sampler `X = U^(1/a)` for Beta(a, 1).
#[derive(Debug, Clone, Copy)]
pub struct PowerSampler {
    pub a: f64,
}

impl Sampler for PowerSampler {
    fn draw(&self, stream: &mut Stream) -> f64 {
        let u = stream.open01();
        if self.a == 1.0 {
            u
        } else {
            (u.ln() / self.a).exp()
        }
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(HalfordError::param(name, v, "must be finite and positive"))
    }
}

// ---------------------------------------------------------------------------
// Binomial point null vs Beta prior

/// Binomial point null `H2: theta = theta0` against `H1: theta ~ Beta(alpha, beta)`.
///
/// Setting `simulator_alpha` / `simulator_beta` makes the H1 simulator draw
/// `theta` from a different Beta prior while Bayes factors are still
/// evaluated under `Beta(alpha, beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinomialPointNullSpec {
    pub n: u64,
    pub alpha: f64,
    pub beta: f64,
    pub theta0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulator_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulator_beta: Option<f64>,
}

impl BinomialPointNullSpec {
    /// Uniform Beta(1, 1) prior against `theta0 = 1/2`.
    pub fn uniform(n: u64) -> Self {
        BinomialPointNullSpec {
            n,
            alpha: 1.0,
            beta: 1.0,
            theta0: 0.5,
            simulator_alpha: None,
            simulator_beta: None,
        }
    }

    /// Same evaluator, H1 simulator drawing `theta ~ Beta(sa, sb)`.
    pub fn with_simulator(mut self, sa: f64, sb: f64) -> Self {
        self.simulator_alpha = Some(sa);
        self.simulator_beta = Some(sb);
        self
    }

    /// `log p1(y)` for every `y` in `0..=n`.
    pub fn log_marginal_h1(&self) -> Vec<f64> {
        let n = self.n;
        (0..=n)
            .map(|y| {
                ln_choose(n, y) + ln_beta(y as f64 + self.alpha, (n - y) as f64 + self.beta)
                    - ln_beta(self.alpha, self.beta)
            })
            .collect()
    }

    /// `log p2(y)` for every `y` in `0..=n`.
    pub fn log_marginal_h2(&self) -> Vec<f64> {
        let n = self.n;
        let (lt, l1t) = (self.theta0.ln(), (-self.theta0).ln_1p());
        (0..=n)
            .map(|y| ln_choose(n, y) + y as f64 * lt + (n - y) as f64 * l1t)
            .collect()
    }
}

pub fn make_binomial_pair(spec: &BinomialPointNullSpec) -> Result<ModelPair> {
    if spec.n == 0 {
        return Err(HalfordError::param("n", 0.0, "need at least one trial"));
    }
    positive("alpha", spec.alpha)?;
    positive("beta", spec.beta)?;
    if !(spec.theta0 > 0.0 && spec.theta0 < 1.0) {
        return Err(HalfordError::param(
            "theta0",
            spec.theta0,
            "must lie in (0, 1)",
        ));
    }
    let sim_a = positive(
        "simulator_alpha",
        spec.simulator_alpha.unwrap_or(spec.alpha),
    )?;
    let sim_b = positive("simulator_beta", spec.simulator_beta.unwrap_or(spec.beta))?;

    let prior = Beta::new(sim_a, sim_b)
        .map_err(|_| HalfordError::param("simulator_alpha", sim_a, "invalid Beta prior"))?;
    let h1_sampler = BetaBinomialSampler { n: spec.n, prior };
    let h2_sampler = BinomialSampler {
        dist: Binomial::new(spec.n, spec.theta0)
            .map_err(|_| HalfordError::param("theta0", spec.theta0, "invalid Binomial"))?,
    };
    let mismatch = spec.simulator_alpha.is_some() || spec.simulator_beta.is_some();
    let label_1 = if mismatch {
        format!(
            "H1: theta~Beta({},{}) [simulated from Beta({},{})]",
            spec.alpha, spec.beta, sim_a, sim_b
        )
    } else {
        format!("H1: theta~Beta({},{})", spec.alpha, spec.beta)
    };
    Ok(ModelPair::new(
        label_1,
        format!("H2: theta={}", spec.theta0),
        (
            Arc::new(h1_sampler),
            Arc::new(DiscreteLogTable::new(spec.log_marginal_h1())),
        ),
        (
            Arc::new(h2_sampler),
            Arc::new(DiscreteLogTable::new(spec.log_marginal_h2())),
        ),
        SupportKind::FiniteDiscrete {
            size: spec.n as usize + 1,
        },
    ))
}

// ---------------------------------------------------------------------------
// Beta(a, 1) vs Uniform(0, 1)

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaUnitSpec {
    pub a: f64,
}

impl BetaUnitSpec {
    /// `rho(a) = 2 sqrt(a) / (a + 1)`.
    pub fn rho(&self) -> f64 {
        2.0 * self.a.sqrt() / (self.a + 1.0)
    }

    pub fn rho_squared(&self) -> f64 {
        4.0 * self.a / ((self.a + 1.0) * (self.a + 1.0))
    }

    /// Density ratio `W(x) = a x^(a-1)`.
    pub fn weight(&self, x: f64) -> f64 {
        self.a * x.powf(self.a - 1.0)
    }
}

pub fn make_beta_unit_pair(spec: &BetaUnitSpec) -> Result<ModelPair> {
    let a = positive("a", spec.a)?;
    Ok(power_pair(format!("Beta({a},1)"), a))
}

fn power_pair(label_1: String, a: f64) -> ModelPair {
    ModelPair::new(
        label_1,
        "Uniform(0,1)",
        (Arc::new(PowerSampler { a }), Arc::new(PowerDensity { a })),
        (
            Arc::new(PowerSampler { a: 1.0 }),
            Arc::new(PowerDensity { a: 1.0 }),
        ),
        SupportKind::ContinuousUnitInterval,
    )
    .with_analytic(AnalyticForm::PowerOfUniform { a })
}

/// Both models uniform on (0, 1).
pub fn make_identical_pair() -> ModelPair {
    ModelPair::new(
        "Uniform(0,1)",
        "Uniform(0,1)",
        (
            Arc::new(PowerSampler { a: 1.0 }),
            Arc::new(PowerDensity { a: 1.0 }),
        ),
        (
            Arc::new(PowerSampler { a: 1.0 }),
            Arc::new(PowerDensity { a: 1.0 }),
        ),
        SupportKind::ContinuousUnitInterval,
    )
    .with_analytic(AnalyticForm::Identical)
}

// ---------------------------------------------------------------------------
// Power-law counterexamples

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    AboveHalf,
    BelowHalf,
}

/// Pairs on (0, 1) with `p2 = 1` for which `I(t)` is finite but the variance of
/// the order-`t` check is infinite on one side.
///
/// * above half (`t > 1/2`): `gamma = 1/(2t)`, `p1(x) = (1 - gamma) x^(-gamma)`,
///   so `I(2t) = +inf`;
/// * below half (`t < 1/2`): `gamma = 1/(1 - 2t)`, `p1(x) = (gamma + 1) x^gamma`,
///   so `I(2t - 1) = +inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCounterexampleSpec {
    pub t_star: f64,
    pub branch: Branch,
}

impl PowerCounterexampleSpec {
    /// Picks the branch matching `t_star`.
    pub fn for_exponent(t_star: f64) -> Self {
        let branch = if t_star > 0.5 {
            Branch::AboveHalf
        } else {
            Branch::BelowHalf
        };
        PowerCounterexampleSpec { t_star, branch }
    }

    pub fn gamma(&self) -> f64 {
        match self.branch {
            Branch::AboveHalf => 1.0 / (2.0 * self.t_star),
            Branch::BelowHalf => 1.0 / (1.0 - 2.0 * self.t_star),
        }
    }

    /// Exponent `a` of the equivalent Beta(a, 1) density.
    pub fn beta_shape(&self) -> f64 {
        match self.branch {
            Branch::AboveHalf => 1.0 - self.gamma(),
            Branch::BelowHalf => 1.0 + self.gamma(),
        }
    }

    /// Closed-form `I(s)`.
    pub fn hellinger(&self, s: f64) -> f64 {
        let g = self.gamma();
        match self.branch {
            Branch::AboveHalf if g * s < 1.0 => (1.0 - g).powf(s) / (1.0 - g * s),
            Branch::BelowHalf if g * s > -1.0 => (g + 1.0).powf(s) / (g * s + 1.0),
            _ => f64::INFINITY,
        }
    }
}

pub fn make_counterexample_pair(spec: &PowerCounterexampleSpec) -> Result<ModelPair> {
    let t = spec.t_star;
    if !t.is_finite() || t == 0.5 {
        return Err(HalfordError::param("t_star", t, "must differ from 1/2"));
    }
    match spec.branch {
        Branch::AboveHalf if t <= 0.5 => {
            return Err(HalfordError::param(
                "t_star",
                t,
                "above-half branch needs t > 1/2",
            ))
        }
        Branch::BelowHalf if t >= 0.5 => {
            return Err(HalfordError::param(
                "t_star",
                t,
                "below-half branch needs t < 1/2",
            ))
        }
        _ => {}
    }
    let a = spec.beta_shape();
    let g = spec.gamma();
    let label = match spec.branch {
        Branch::AboveHalf => format!("(1-{g})x^(-{g})"),
        Branch::BelowHalf => format!("({g}+1)x^{g}"),
    };
    Ok(power_pair(label, a))
}

// ---------------------------------------------------------------------------
// Generic user-supplied discrete pair

/// Two probability vectors over the same atoms. Entries need not be normalized;
/// zero patterns must coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePairSpec {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

pub fn make_discrete_pair(spec: &DiscretePairSpec) -> Result<ModelPair> {
    if spec.p1.is_empty() || spec.p1.len() != spec.p2.len() {
        return Err(HalfordError::Input(format!(
            "discrete pair needs two equal-length, non-empty vectors (got {} and {})",
            spec.p1.len(),
            spec.p2.len()
        )));
    }
    let normalize = |p: &[f64], name: &'static str| -> Result<Vec<f64>> {
        if let Some(&bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(HalfordError::param(
                name,
                bad,
                "probabilities must be finite and >= 0",
            ));
        }
        let total: f64 = p.iter().sum();
        if total <= 0.0 {
            return Err(HalfordError::param(
                name,
                total,
                "total mass must be positive",
            ));
        }
        Ok(p.iter().map(|v| v / total).collect())
    };
    let p1 = normalize(&spec.p1, "p1")?;
    let p2 = normalize(&spec.p2, "p2")?;
    if let Some(k) = (0..p1.len()).find(|&k| (p1[k] > 0.0) != (p2[k] > 0.0)) {
        return Err(HalfordError::AbsoluteContinuity {
            x: k as f64,
            log_p1: p1[k].ln(),
            log_p2: p2[k].ln(),
            draw: None,
        });
    }
    let logs = |p: &[f64]| p.iter().map(|v| v.ln()).collect::<Vec<_>>();
    Ok(ModelPair::new(
        "p1",
        "p2",
        (
            Arc::new(TableSampler::from_probabilities(&p1)),
            Arc::new(DiscreteLogTable::new(logs(&p1))),
        ),
        (
            Arc::new(TableSampler::from_probabilities(&p2)),
            Arc::new(DiscreteLogTable::new(logs(&p2))),
        ),
        SupportKind::FiniteDiscrete { size: p1.len() },
    ))
}
