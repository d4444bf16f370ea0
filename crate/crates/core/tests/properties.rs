mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hellinger_integral_is_one_at_both_ends(pair in any_pair()) {
        endpoints_are_one(&pair)?;
    }

    #[test]
    fn hellinger_integral_is_log_convex(pair in any_pair()) {
        log_convexity(&pair)?;
    }

    #[test]
    fn moment_and_variance_bounds(pair in finite_pair()) {
        bound_suite(&pair)?;
    }

    #[test]
    fn balanced_split_is_optimal(n in 4usize..=100, rho in 0.01f64..1.0) {
        balanced_optimality(n, rho)?;
    }

    #[test]
    fn weight_diagnostics_ignore_shifts(lw in log_weights(), k in -50i32..50, shift in -1e3f64..1e3) {
        weight_shift_invariance(&lw, k, shift)?;
    }

    #[test]
    fn weight_diagnostics_ignore_order(lw in log_weights(), seed in any::<u64>()) {
        weight_permutation_invariance(&lw, seed)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn label_swap_negates_delta(pair in finite_pair(), m1 in 2usize..300, m2 in 2usize..300, seed in any::<u64>()) {
        label_swap(&pair, m1, m2, seed)?;
    }

    #[test]
    fn bridge_is_scale_equivariant(
        a in 0.2f64..6.0,
        log_c in -30.0f64..30.0,
        m1 in 2usize..400,
        m2 in 2usize..400,
        seed in any::<u64>(),
    ) {
        bridge_scale_equivariance(a, log_c, m1, m2, seed)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn studies_are_identical_across_thread_counts(study in study_ids(), seed in any::<u64>()) {
        thread_determinism(study, seed)?;
    }
}
