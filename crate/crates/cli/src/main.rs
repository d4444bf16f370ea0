mod config;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use halford::bridge::{
    check_chain, estimate_forward_is, estimate_half_order_bridge, estimate_reverse_is,
    predict_bridge_rsd, BridgeEstimate, ChainReport, IsEstimate, UnnormalizedPair,
    DEFAULT_OVERLAP_FLOOR,
};
use halford::error::{HalfordError, SideId};
use halford::families::ModelPair;
use halford::goodcheck::{
    balanced_split, plan_budget, run_moment_check, CheckPlan, GoodCheckReport, Sides,
    ThresholdRule, Verdict,
};
use halford::harness::{self, StudyConfig, StudyId, DEFAULT_ROOT_SEED};
use halford::overlap::{
    convexity_certificate, hellinger_integral, kl_divergence_limit, overlap_profile, overlap_rho,
    renyi_divergence, variance_identity, ConvexityReport, Method, OverlapProfile, VarianceIdentity,
};
use halford::stats::csv_float;
use halford::weights::{
    default_lorenz_grid, half_order_overlap_from_weights, normalize_and_diagnose, sample_weights,
    HalfOrderSummary, WeightDiagnostics, WeightOrigin,
};
use serde::Serialize;
use serde_json::json;

use crate::config::ConfigFile;
use crate::model::ModelArgs;

type Result<T> = std::result::Result<T, HalfordError>;

const SEED_ENV: &str = "HALFORD_SEED";

/// Overlap, Good-check and bridge diagnostics for pairs of Bayesian models.
#[derive(Debug, Parser)]
#[command(name = "halford", version)]
struct Cli {
    /// Config file with [model], [study] and [output] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for replication studies.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Shorthand for `--format json`.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hellinger integral, overlap and divergences of a model pair.
    Overlap(OverlapArgs),
    /// Monte Carlo Good check of computed Bayes factors.
    Check(CheckArgs),
    /// Half-order bridge and one-sided importance-sampling estimates of Z1/Z2.
    Bridge(BridgeArgs),
    /// Concentration diagnostics of importance weights.
    Weights(WeightsArgs),
    /// Run a replication study and write tables, fan charts and a manifest.
    Study(StudyArgs),
    /// Split a draw budget between the two sides of a check.
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Auto,
    Analytic,
    ExactSum,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    H1,
    H2,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct OverlapArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    /// Monte Carlo draws.
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    /// Side the Monte Carlo draws come from.
    #[arg(long, value_enum, default_value = "h2")]
    side: SideArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Profile grid `lo,hi,count`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    t: Option<f64>,
    /// two-sided, one-sided-from-h1 or one-sided-from-h2.
    #[arg(long)]
    sides: Option<Sides>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    /// Total draws, split evenly between the sides.
    #[arg(long, conflicts_with_all = ["m1", "m2"])]
    budget: Option<usize>,
    /// Significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// clt, worst or chebyshev.
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep per-draw transformed values in the report.
    #[arg(long)]
    keep_raw: bool,
    /// Re-render a report saved with `--json`.
    #[arg(long)]
    from_report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Estimator {
    All,
    Bridge,
    Forward,
    Reverse,
}

#[derive(Debug, Args)]
struct BridgeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    /// Total draws, split evenly for the bridge; one-sided estimators use all of it.
    #[arg(long, conflicts_with_all = ["m1", "m2"])]
    budget: Option<usize>,
    /// Multiply the first density by this constant.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, value_enum, default_value = "all")]
    estimator: Estimator,
    #[arg(long)]
    seed: Option<u64>,
    /// Overlaps of adjacent stages of a bridging chain.
    #[arg(long, value_delimiter = ',')]
    chain: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_OVERLAP_FLOOR)]
    floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OriginArg {
    Proposal,
    Target,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct WeightsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Transform exponent of the Bayes factor.
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    /// Draw from the proposal (H2) or the target (H1).
    #[arg(long, value_enum, default_value = "proposal")]
    origin: OriginArg,
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    top_p: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the Lorenz curve as CSV.
    #[arg(long)]
    lorenz_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// sim1a, sim1b, sim3, sim-weights or custom.
    #[arg(long)]
    study: Option<StudyId>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    a_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    exponents: Option<Vec<f64>>,
    /// H1 simulator prior `alpha,beta`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    simulator: Option<Vec<f64>>,
    #[arg(long)]
    fan_n: Option<u64>,
    #[arg(long)]
    fan_points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Render SVG plots as well.
    #[arg(long)]
    plots: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Overlap; computed from the model when omitted.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    /// Per-draw costs `c1,c2`; the budget is then in cost units.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    costs: Option<Vec<f64>>,
    /// I(2), for the one-sided order-2 variance.
    #[arg(long)]
    i2: Option<f64>,
}

struct Ctx {
    file: ConfigFile,
    format: Format,
    threads: Option<usize>,
}

impl Ctx {
    fn emit<T: Serialize>(
        &self,
        config: &serde_json::Value,
        result: &T,
        table: impl FnOnce() -> String,
    ) -> Result<()> {
        match self.format {
            Format::Json => {
                let doc = json!({ "config": config, "result": result });
                println!("{}", serde_json::to_string_pretty(&doc)?);
            }
            Format::Table => {
                println!("# config {}", serde_json::to_string(config)?);
                print!("{}", table());
            }
            Format::Csv => {
                return Err(HalfordError::Format(
                    "csv output is not available for this command".into(),
                ))
            }
        }
        Ok(())
    }

    fn model(&self, flags: &ModelArgs) -> Result<(ModelArgs, ModelPair)> {
        let merged = flags.clone().or(self.file.model.clone());
        let pair = merged.build()?;
        Ok((merged.resolve()?, pair))
    }
}

fn seed_or_default(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            HalfordError::Input(format!(
                "{SEED_ENV}=`{v}` is not an unsigned 64-bit integer"
            ))
        }),
        Err(_) => Ok(DEFAULT_ROOT_SEED),
    }
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        csv_float(x)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), fmt)
}

fn parse_rule(s: &str) -> Result<ThresholdRule> {
    match s {
        "worst" => Ok(ThresholdRule::WorstCaseClt),
        other => other.parse(),
    }
}

fn budgets(
    m1: Option<usize>,
    m2: Option<usize>,
    budget: Option<usize>,
    default_total: usize,
) -> Result<(usize, usize)> {
    match (m1, m2, budget) {
        (Some(a), Some(b), None) => Ok((a, b)),
        (None, None, Some(n)) => Ok(balanced_split(n)),
        (None, None, None) => Ok(balanced_split(default_total)),
        _ => Err(HalfordError::Input(
            "give both --m1 and --m2, or --budget".into(),
        )),
    }
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct OverlapOutput {
    label_1: String,
    label_2: String,
    t: f64,
    method: Method,
    #[serde(with = "halford::stats::ext_real_serde")]
    hellinger: f64,
    #[serde(with = "halford::stats::opt_ext_real_serde")]
    hellinger_se: Option<f64>,
    rho: f64,
    #[serde(with = "halford::stats::opt_ext_real_serde")]
    rho_se: Option<f64>,
    variance: Option<VarianceIdentity>,
    #[serde(with = "halford::stats::opt_ext_real_serde")]
    renyi: Option<f64>,
    #[serde(with = "halford::stats::opt_ext_real_serde")]
    kl: Option<f64>,
    profile: Option<OverlapProfile>,
    convexity: Option<ConvexityReport>,
}

fn cmd_overlap(ctx: &Ctx, a: &OverlapArgs) -> Result<u8> {
    let (model, pair) = ctx.model(&a.model)?;
    let seed = seed_or_default(a.seed)?;
    let method = match a.method {
        MethodArg::Auto => Method::best_for(&pair).unwrap_or(Method::MonteCarlo {
            m: a.m,
            seed,
            side: side(a.side),
        }),
        MethodArg::Analytic => Method::Analytic,
        MethodArg::ExactSum => Method::ExactSum,
        MethodArg::Quadrature => Method::Quadrature,
        MethodArg::MonteCarlo => Method::MonteCarlo {
            m: a.m,
            seed,
            side: side(a.side),
        },
    };
    let it = hellinger_integral(&pair, a.t, method)?;
    let rho = overlap_rho(&pair, method)?;
    let deterministic = !matches!(method, Method::MonteCarlo { .. });
    let variance = if deterministic {
        variance_identity(&pair, a.t, method).ok()
    } else {
        None
    };
    let renyi = renyi_divergence(&pair, a.t, method).ok();
    let kl = if deterministic {
        kl_divergence_limit(&pair, method).ok()
    } else {
        None
    };
    let (profile, convexity) = match &a.grid {
        Some(g) => {
            if g.len() != 3 {
                return Err(HalfordError::Input("--grid takes lo,hi,count".into()));
            }
            let count = g[2] as usize;
            if count < 2 || !(g[1] > g[0]) {
                return Err(HalfordError::Input(
                    "--grid needs lo < hi and count >= 2".into(),
                ));
            }
            let grid: Vec<f64> = (0..count)
                .map(|i| g[0] + (g[1] - g[0]) * i as f64 / (count - 1) as f64)
                .collect();
            let p = overlap_profile(&pair, &grid, method)?;
            let c = convexity_certificate(&p, 1e-9)?;
            (Some(p), Some(c))
        }
        None => (None, None),
    };
    let out = OverlapOutput {
        label_1: pair.label_1.clone(),
        label_2: pair.label_2.clone(),
        t: a.t,
        method,
        hellinger: it.value,
        hellinger_se: it.se,
        rho: rho.value,
        rho_se: rho.se,
        variance,
        renyi,
        kl,
        profile,
        convexity,
    };
    let config = json!({ "command": "overlap", "model": model, "t": a.t, "method": method });
    ctx.emit(&config, &out, || {
        let mut s = format!("pair             {} vs {}\n", out.label_1, out.label_2);
        s += &format!("method           {}\n", method.name());
        s += &format!("I({})           {}", out.t, fmt(out.hellinger));
        s += &out
            .hellinger_se
            .map_or("\n".into(), |se| format!("  (se {})\n", fmt(se)));
        s += &format!("rho              {}\n", fmt(out.rho));
        match &out.variance {
            Some(v) => {
                s += &format!("var side 1       {}\n", fmt(v.var_side1));
                s += &format!("var side 2       {}\n", fmt(v.var_side2));
            }
            None if deterministic => s += "variance         +inf on at least one side\n",
            None => {}
        }
        if let Some(r) = out.renyi {
            s += &format!("renyi D_t        {}\n", fmt(r));
        }
        if let Some(k) = out.kl {
            s += &format!("kl(p1 || p2)     {}\n", fmt(k));
        }
        if let (Some(p), Some(c)) = (&out.profile, &out.convexity) {
            s += "t,I(t)\n";
            for (t, v) in p.grid.iter().zip(&p.values) {
                s += &format!("{},{}\n", fmt(*t), fmt(*v));
            }
            s += &format!(
                "log-convexity    {} (max violation {})\n",
                if c.pass { "pass" } else { "FAIL" },
                fmt(c.max_violation)
            );
        }
        s
    })?;
    Ok(0)
}

fn side(s: SideArg) -> SideId {
    match s {
        SideArg::H1 => SideId::H1,
        SideArg::H2 => SideId::H2,
    }
}

// ---------------------------------------------------------------------------

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Consistent => 0,
        Verdict::Flagged => 2,
        Verdict::TargetUnknown => 1,
    }
}

fn print_check(ctx: &Ctx, config: &serde_json::Value, report: &GoodCheckReport) -> Result<u8> {
    ctx.emit(config, report, || format!("{report}\n"))?;
    Ok(verdict_code(report.verdict))
}

fn cmd_check(ctx: &Ctx, a: &CheckArgs) -> Result<u8> {
    if let Some(path) = &a.from_report {
        let text = std::fs::read_to_string(path)?;
        let doc: serde_json::Value = serde_json::from_str(&text)?;
        let (config, report) = match doc.get("result") {
            Some(r) => (
                doc.get("config")
                    .cloned()
                    .unwrap_or(serde_json::Value::Null),
                r.clone(),
            ),
            None => (json!({ "command": "check", "from_report": path }), doc),
        };
        let report: GoodCheckReport = serde_json::from_value(report)?;
        return print_check(ctx, &config, &report);
    }
    let (model, pair) = ctx.model(&a.model)?;
    let (m1, m2) = budgets(a.m1, a.m2, a.budget, 4000)?;
    let mut plan = CheckPlan::half_order(m1, m2, seed_or_default(a.seed)?)
        .with_t(a.t.unwrap_or(0.5))
        .with_sides(a.sides.unwrap_or(Sides::TwoSided))
        .with_alpha(a.alpha.unwrap_or(0.05));
    if let Some(r) = &a.rule {
        plan = plan.with_rule(parse_rule(r)?);
    }
    plan.keep_raw = a.keep_raw;
    let report = run_moment_check(&pair, &plan)?;
    let config = json!({ "command": "check", "model": model, "plan": plan });
    print_check(ctx, &config, &report)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BridgeOutput {
    #[serde(with = "halford::stats::opt_ext_real_serde")]
    true_ratio: Option<f64>,
    bridge: Option<BridgeEstimate>,
    #[serde(with = "halford::stats::opt_ext_real_serde")]
    predicted_rsd: Option<f64>,
    forward: Option<IsEstimate>,
    reverse: Option<IsEstimate>,
    chain: Option<ChainReport>,
}

fn cmd_bridge(ctx: &Ctx, a: &BridgeArgs) -> Result<u8> {
    let (model, pair) = ctx.model(&a.model)?;
    let seed = seed_or_default(a.seed)?;
    let (m1, m2) = budgets(a.m1, a.m2, a.budget, 2000)?;
    let rho = Method::best_for(&pair)
        .and_then(|m| overlap_rho(&pair, m).ok())
        .map(|e| e.value);
    let mut up = UnnormalizedPair::normalized(pair);
    if let Some(c) = a.scale {
        up = up.rescaled(c)?;
    }
    let want = |e: Estimator| a.estimator == Estimator::All || a.estimator == e;
    let bridge = if want(Estimator::Bridge) {
        Some(estimate_half_order_bridge(&up, m1, m2, seed)?)
    } else {
        None
    };
    let predicted_rsd = match (bridge, rho) {
        (Some(_), Some(r)) => Some(predict_bridge_rsd(r, m1, m2)?),
        _ => None,
    };
    let forward = if want(Estimator::Forward) {
        Some(estimate_forward_is(&up, m1 + m2, seed)?)
    } else {
        None
    };
    let reverse = if want(Estimator::Reverse) {
        Some(estimate_reverse_is(&up, m1 + m2, seed)?)
    } else {
        None
    };
    let chain = match &a.chain {
        Some(o) => {
            let stages: Vec<String> = (0..=o.len()).map(|i| format!("stage{i}")).collect();
            Some(check_chain(&stages, o, a.floor, Some(m1.min(m2)))?)
        }
        None => None,
    };
    let out = BridgeOutput {
        true_ratio: up.true_ratio,
        bridge,
        predicted_rsd,
        forward,
        reverse,
        chain,
    };
    let config = json!({
        "command": "bridge", "model": model, "m1": m1, "m2": m2, "scale": a.scale.unwrap_or(1.0),
        "seed": seed, "estimator": format!("{:?}", a.estimator).to_lowercase(), "floor": a.floor,
    });
    let code = match &out.chain {
        Some(c) if !c.ok => 2,
        _ => 0,
    };
    ctx.emit(&config, &out, || {
        let mut s = format!("true ratio       {}\n", fmt_opt(out.true_ratio));
        if let Some(b) = &out.bridge {
            s += &format!(
                "bridge r_hat     {}  (rsd {}, m1 = {}, m2 = {})\n",
                fmt(b.r_hat),
                fmt(b.rsd_hat),
                b.m1,
                b.m2
            );
            s += &format!("rho^2 hat        {}\n", fmt(b.rho_sq_hat));
        }
        if let Some(r) = out.predicted_rsd {
            s += &format!("predicted rsd    {}\n", fmt(r));
        }
        for e in [&out.forward, &out.reverse].into_iter().flatten() {
            s += &format!(
                "{:<16} {}  (se {}, n = {})\n",
                format!("{:?} IS", e.direction).to_lowercase(),
                fmt(e.r_hat),
                fmt(e.se),
                e.n
            );
        }
        if let Some(c) = &out.chain {
            for l in &c.links {
                s += &format!(
                    "link {} -> {}  rho {}{}\n",
                    l.from,
                    l.to,
                    fmt(l.rho),
                    if l.below_floor { "  below floor" } else { "" }
                );
            }
            s += &format!(
                "chain            {}\n",
                if c.ok { "ok" } else { "needs more stages" }
            );
        }
        s
    })?;
    Ok(code)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct WeightsOutput {
    diagnostics: WeightDiagnostics,
    half_order: Option<HalfOrderSummary>,
}

fn cmd_weights(ctx: &Ctx, a: &WeightsArgs) -> Result<u8> {
    let (model, pair) = ctx.model(&a.model)?;
    let seed = seed_or_default(a.seed)?;
    let origin = match a.origin {
        OriginArg::Proposal => WeightOrigin::ProposalSide,
        OriginArg::Target => WeightOrigin::TargetSide,
    };
    let wv = sample_weights(&pair, a.t, origin, a.draws, seed)?;
    let diagnostics = normalize_and_diagnose(&wv, &default_lorenz_grid(), &a.top_p)?;
    let half_order = if a.t == 0.5 {
        Some(half_order_overlap_from_weights(&wv)?)
    } else {
        None
    };
    if let Some(path) = &a.lorenz_out {
        std::fs::write(path, diagnostics.lorenz_csv())?;
    }
    let config = json!({
        "command": "weights", "model": model, "t": a.t, "origin": origin, "draws": a.draws, "top_p": a.top_p, "seed": seed,
    });
    let out = WeightsOutput {
        diagnostics,
        half_order,
    };
    if ctx.format == Format::Csv {
        print!("{}", out.diagnostics.summary_csv());
        return Ok(0);
    }
    ctx.emit(&config, &out, || {
        let d = &out.diagnostics;
        let mut s = format!(
            "draws            {}  ({:?}, exponent {})\n",
            d.n,
            d.origin,
            fmt(d.transform_exponent)
        );
        s += &format!("kappa_n          {}\n", fmt(d.kappa_n));
        for (p, v) in &d.top_share {
            s += &format!("top share {:<6} {}\n", fmt(*p), fmt(*v));
        }
        s += &format!("cv_half^2        {}\n", fmt_opt(d.cv_half_sq));
        s += &format!("max weight       {}\n", fmt(d.max_weight));
        if let Some(h) = &out.half_order {
            s += &format!("rho hat          {}  (se {})\n", fmt(h.rho_hat), fmt(h.se));
        }
        s
    })?;
    Ok(0)
}

// ---------------------------------------------------------------------------

fn cmd_study(ctx: &Ctx, a: &StudyArgs) -> Result<u8> {
    let empty = toml::Table::new();
    let table = ctx.file.study.as_ref().unwrap_or(&empty);
    if a.study.is_none() && !table.contains_key("study") {
        return Err(HalfordError::Input(
            "no study given (use --study or a [study] section)".into(),
        ));
    }
    let mut cfg: StudyConfig = config::study_config(table, a.study)?;
    if !table.contains_key("root_seed") || a.seed.is_some() {
        cfg.root_seed = seed_or_default(a.seed)?;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if let Some(b) = a.budget {
        cfg.budget = b;
    }
    if let Some(v) = &a.n_values {
        cfg.n_values = v.clone();
    }
    if let Some(v) = &a.a_values {
        cfg.a_values = v.clone();
    }
    if let Some(v) = &a.exponents {
        cfg.exponents = v.clone();
    }
    if let Some(v) = &a.simulator {
        cfg.simulator = Some((v[0], v[1]));
    }
    if a.fan_n.is_some() {
        cfg.fan_n = a.fan_n;
    }
    if let Some(p) = a.fan_points {
        cfg.fan_points = p;
    }
    cfg.plots |= a.plots;
    cfg.validate()?;
    let out = a
        .out
        .clone()
        .or(ctx.file.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("halford-out"));
    let threads = ctx.threads.or(ctx.file.output.threads);
    let (result, manifest) = harness::run_and_write(&cfg, &out, threads)?;
    let detection = harness::detection_time_scan(&result);
    let config =
        json!({ "command": "study", "study": cfg, "out": out, "threads": manifest.threads });
    if ctx.format == Format::Csv {
        print!("{}", harness::summary_csv(&result));
        return Ok(0);
    }
    let summary = json!({ "manifest": manifest, "detection": detection });
    ctx.emit(&config, &summary, || {
        let mut s = harness::summary_csv(&result);
        for (panel, m) in &detection {
            s += &format!(
                "detection {panel}: {}\n",
                m.map_or("none".into(), |m| m.to_string())
            );
        }
        s += &format!(
            "wrote {} files to {} in {:.1}s\n",
            manifest.files.len() + 1,
            out.join(cfg.study.name()).display(),
            manifest.runtime_seconds
        );
        s
    })?;
    Ok(0)
}

// ---------------------------------------------------------------------------

fn cmd_plan(ctx: &Ctx, a: &PlanArgs) -> Result<u8> {
    let (model, rho, i2) = if a.model.family.is_some() || ctx.file.model.family.is_some() {
        let (model, pair) = ctx.model(&a.model)?;
        let method = Method::best_for(&pair).ok_or_else(|| {
            HalfordError::Input("model has no deterministic overlap; pass --rho".into())
        })?;
        let rho = a.rho.unwrap_or(overlap_rho(&pair, method)?.value);
        let i2 =
            a.i2.or_else(|| hellinger_integral(&pair, 2.0, method).ok().map(|e| e.value));
        (Some(model), Some(rho), i2)
    } else {
        (None, a.rho, a.i2)
    };
    let costs = a.costs.as_ref().map(|c| (c[0], c[1]));
    let plan = plan_budget(rho, a.budget, costs, i2)?;
    let config = json!({ "command": "plan", "model": model, "rho": rho, "budget": a.budget, "costs": costs, "i2": i2 });
    ctx.emit(&config, &plan, || {
        let c = &plan.comparison;
        let mut s = format!("allocation       m1 = {}  m2 = {}\n", plan.m1, plan.m2);
        s += &format!("rho              {}\n", fmt_opt(c.rho));
        s += &format!("var one-sided    {}\n", fmt_opt(c.v_one_sided));
        s += &format!(
            "var two-sided    {}  (balanced)\n",
            fmt(c.v_two_sided_balanced)
        );
        s += &format!("var allocated    {}\n", fmt(c.v_two_sided_allocated));
        s += &format!("efficiency       {}\n", fmt_opt(c.relative_efficiency));
        s += &format!("efficiency >=    {}\n", fmt_opt(c.efficiency_lower_bound));
        s += &format!(
            "two-sided wins   {}\n",
            if c.dominance {
                "guaranteed"
            } else {
                "not guaranteed"
            }
        );
        s
    })?;
    Ok(0)
}

// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<u8> {
    let file = match &cli.config {
        Some(p) => config::load(p)?,
        None => ConfigFile::default(),
    };
    let format = if cli.json {
        Format::Json
    } else {
        cli.format.unwrap_or(Format::Table)
    };
    if cli.threads == Some(0) {
        return Err(HalfordError::Input("--threads must be >= 1".into()));
    }
    let ctx = Ctx {
        file,
        format,
        threads: cli.threads,
    };
    match &cli.command {
        Command::Overlap(a) => cmd_overlap(&ctx, a),
        Command::Check(a) => cmd_check(&ctx, a),
        Command::Bridge(a) => cmd_bridge(&ctx, a),
        Command::Weights(a) => cmd_weights(&ctx, a),
        Command::Study(a) => cmd_study(&ctx, a),
        Command::Plan(a) => cmd_plan(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
