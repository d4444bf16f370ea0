//! Fixtures, strategies and property bodies shared by the property suite and
//! the acceptance runner.
#![allow(dead_code)]

use halford::bridge::{estimate_half_order_bridge, UnnormalizedPair};
use halford::families::*;
use halford::goodcheck::{balanced_split, plan_budget, run_two_sided_half_order, CheckPlan};
use halford::harness::{run_study_with_threads, study_files, StudyConfig, StudyId};
use halford::overlap::{
    convexity_certificate, hellinger_integral, overlap_profile, variance_identity, Method,
};
use halford::weights::{default_lorenz_grid, normalize_and_diagnose, WeightOrigin, WeightVector};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type PropResult = Result<(), TestCaseError>;

// ---------------------------------------------------------------------------
// Fixtures

pub fn binomial(n: u64) -> ModelPair {
    make_binomial_pair(&BinomialPointNullSpec::uniform(n)).unwrap()
}

pub fn binomial_general(n: u64, alpha: f64, beta: f64, theta0: f64) -> ModelPair {
    let mut spec = BinomialPointNullSpec::uniform(n);
    spec.alpha = alpha;
    spec.beta = beta;
    spec.theta0 = theta0;
    make_binomial_pair(&spec).unwrap()
}

pub fn discrete(p1: &[f64], p2: &[f64]) -> ModelPair {
    make_discrete_pair(&DiscretePairSpec {
        p1: p1.to_vec(),
        p2: p2.to_vec(),
    })
    .unwrap()
}

pub fn beta_unit(a: f64) -> ModelPair {
    make_beta_unit_pair(&BetaUnitSpec { a }).unwrap()
}

/// Every finite-discrete fixture used by the exact-sum checks.
pub fn discrete_fixtures() -> Vec<(String, ModelPair)> {
    let mut v: Vec<(String, ModelPair)> = [10u64, 50, 100]
        .iter()
        .map(|&n| (format!("binomial n={n}"), binomial(n)))
        .collect();
    v.push((
        "binomial n=20 Beta(2,3) theta0=0.3".into(),
        binomial_general(20, 2.0, 3.0, 0.3),
    ));
    v.push((
        "discrete skewed".into(),
        discrete(&[0.1, 0.2, 0.3, 0.4], &[0.25, 0.25, 0.25, 0.25]),
    ));
    v.push((
        "discrete opposed".into(),
        discrete(&[0.7, 0.2, 0.05, 0.05], &[0.05, 0.15, 0.3, 0.5]),
    ));
    v
}

// ---------------------------------------------------------------------------
// Strategies

/// A random finite-discrete pair: binomial or an arbitrary positive vector pair.
pub fn finite_pair() -> impl Strategy<Value = ModelPair> {
    prop_oneof![
        (1u64..=100, 0.2f64..5.0, 0.2f64..5.0, 0.05f64..0.95)
            .prop_map(|(n, a, b, th)| binomial_general(n, a, b, th)),
        (2usize..20)
            .prop_flat_map(|k| (
                prop::collection::vec(0.01f64..1.0, k),
                prop::collection::vec(0.01f64..1.0, k)
            ))
            .prop_map(|(p1, p2)| discrete(&p1, &p2)),
    ]
}

pub fn any_pair() -> impl Strategy<Value = ModelPair> {
    prop_oneof![3 => finite_pair(), 1 => (0.1f64..10.0).prop_map(beta_unit)]
}

pub fn log_weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-40.0f64..40.0, 1..300)
}

// ---------------------------------------------------------------------------
// Property bodies

fn exact(pair: &ModelPair) -> Method {
    Method::best_for(pair).expect("deterministic method")
}

pub fn endpoints_are_one(pair: &ModelPair) -> PropResult {
    let m = exact(pair);
    for t in [0.0, 1.0] {
        let v = hellinger_integral(pair, t, m).unwrap().value;
        prop_assert!((v - 1.0).abs() <= 1e-12, "I({t}) = {v}");
    }
    Ok(())
}

pub fn log_convexity(pair: &ModelPair) -> PropResult {
    let grid: Vec<f64> = (0..=30).map(|i| -0.5 + i as f64 * 0.1).collect();
    let profile = overlap_profile(pair, &grid, exact(pair)).unwrap();
    let rep = convexity_certificate(&profile, 1e-9).unwrap();
    prop_assert!(rep.pass, "max violation {}", rep.max_violation);
    Ok(())
}

/// `I(t) <= 1` inside `[0, 1]`, `I(t) >= 1` outside, worst-side variance at
/// least `1 - rho^2` with equality at one half.
pub fn bound_suite(pair: &ModelPair) -> PropResult {
    let m = exact(pair);
    for i in 0..=20 {
        let t = i as f64 / 20.0;
        let v = hellinger_integral(pair, t, m).unwrap().value;
        prop_assert!(v <= 1.0 + 1e-12, "I({t}) = {v}");
    }
    for t in [-0.5, 1.5, 2.0] {
        let v = hellinger_integral(pair, t, m).unwrap().value;
        if v.is_finite() {
            prop_assert!(v >= 1.0 - 1e-12, "I({t}) = {v}");
        }
    }
    let rho = hellinger_integral(pair, 0.5, m).unwrap().value;
    let floor = 1.0 - rho * rho;
    for i in 0..=20 {
        let t = i as f64 / 20.0;
        if let Ok(v) = variance_identity(pair, t, m) {
            let r = v.var_side1.max(v.var_side2);
            prop_assert!(r >= floor - 1e-12 * (1.0 + r), "R({t}) = {r} < {floor}");
        }
    }
    let half = variance_identity(pair, 0.5, m).unwrap();
    prop_assert!((half.var_side1 - floor).abs() <= 1e-12);
    prop_assert!((half.var_side2 - floor).abs() <= 1e-12);
    Ok(())
}

pub fn label_swap(pair: &ModelPair, m1: usize, m2: usize, seed: u64) -> PropResult {
    let plan = CheckPlan::half_order(m1, m2, seed);
    let a = run_two_sided_half_order(pair, &plan).unwrap();
    let b = run_two_sided_half_order(&pair.swapped(), &plan.swapped()).unwrap();
    prop_assert_eq!(a.delta.unwrap().to_bits(), (-b.delta.unwrap()).to_bits());
    prop_assert_eq!(
        a.rho_hat_pooled.map(f64::to_bits),
        b.rho_hat_pooled.map(f64::to_bits)
    );
    Ok(())
}

pub fn bridge_scale_equivariance(
    a: f64,
    log_c: f64,
    m1: usize,
    m2: usize,
    seed: u64,
) -> PropResult {
    let base = UnnormalizedPair::normalized(beta_unit(a));
    let c = log_c.exp();
    let b0 = estimate_half_order_bridge(&base, m1, m2, seed).unwrap();
    let b1 = estimate_half_order_bridge(&base.rescaled(c).unwrap(), m1, m2, seed).unwrap();
    prop_assert_eq!(b0.rho_sq_hat.to_bits(), b1.rho_sq_hat.to_bits());
    prop_assert!(((b1.log_r_hat - b0.log_r_hat) - c.ln()).abs() <= 1e-12 * (1.0 + log_c.abs()));
    prop_assert!((b1.r_hat / (c * b0.r_hat) - 1.0).abs() <= 1e-12 * (1.0 + log_c.abs()));
    Ok(())
}

fn diag(lw: Vec<f64>) -> halford::weights::WeightDiagnostics {
    let wv = WeightVector {
        log_weights: lw,
        origin: WeightOrigin::ProposalSide,
        transform_exponent: 0.5,
    };
    normalize_and_diagnose(&wv, &default_lorenz_grid(), &[0.01, 0.1]).unwrap()
}

/// Integer shifts of dyadic log weights are exact in floating point, so the
/// diagnostics must not move by a single bit; other shifts move them by
/// rounding only.
pub fn weight_shift_invariance(lw: &[f64], k: i32, shift: f64) -> PropResult {
    let dyadic: Vec<f64> = lw
        .iter()
        .map(|v| (v * 1048576.0).round() / 1048576.0)
        .collect();
    let base = diag(dyadic.clone());
    let moved = diag(dyadic.iter().map(|v| v + k as f64).collect());
    prop_assert_eq!(&base, &moved);
    let base = diag(lw.to_vec());
    let moved = diag(lw.iter().map(|v| v + shift).collect());
    prop_assert!((base.kappa_n - moved.kappa_n).abs() <= 1e-12);
    for (x, y) in base.lorenz.iter().zip(&moved.lorenz) {
        prop_assert!((x.1 - y.1).abs() <= 1e-12);
    }
    Ok(())
}

pub fn weight_permutation_invariance(lw: &[f64], seed: u64) -> PropResult {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut shuffled = lw.to_vec();
    shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    prop_assert_eq!(diag(lw.to_vec()), diag(shuffled));
    Ok(())
}

/// The balanced split minimizes `(1/m1 + 1/m2)(1 - rho^2)` over all integer splits.
pub fn balanced_optimality(n: usize, rho: f64) -> PropResult {
    let v = |m1: usize| (1.0 / m1 as f64 + 1.0 / (n - m1) as f64) * (1.0 - rho * rho);
    let best = (1..n).map(v).fold(f64::INFINITY, f64::min);
    let plan = plan_budget(Some(rho), n, None, None).unwrap();
    prop_assert_eq!(plan.m1 + plan.m2, n);
    prop_assert_eq!((plan.m1, plan.m2), balanced_split(n));
    prop_assert!(plan.comparison.v_two_sided_allocated <= best * (1.0 + 1e-14));
    Ok(())
}

/// Same config, different pool sizes, byte-identical files.
pub fn thread_determinism(study: StudyId, root_seed: u64) -> PropResult {
    let mut cfg = StudyConfig::new(study);
    cfg.replications = 6;
    cfg.budget = 60;
    cfg.root_seed = root_seed;
    cfg.n_values = if cfg.n_values.is_empty() {
        vec![]
    } else {
        vec![5, 20]
    };
    cfg.fan_n = cfg.fan_n.map(|_| 5);
    let one = study_files(&run_study_with_threads(&cfg, 1).unwrap()).unwrap();
    let three = study_files(&run_study_with_threads(&cfg, 3).unwrap()).unwrap();
    let again = study_files(&run_study_with_threads(&cfg, 3).unwrap()).unwrap();
    prop_assert_eq!(&one, &three);
    prop_assert_eq!(&three, &again);
    Ok(())
}

pub fn study_ids() -> impl Strategy<Value = StudyId> {
    prop_oneof![
        Just(StudyId::Sim1a),
        Just(StudyId::Sim1b),
        Just(StudyId::Sim3),
        Just(StudyId::SimWeights),
        Just(StudyId::Custom),
    ]
}
