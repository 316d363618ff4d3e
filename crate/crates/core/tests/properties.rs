//! Randomized invariants of the distribution primitives and envelopes.

use nbcall_core::dist::DiscreteDist;
use nbcall_core::nb::{
    match_mean, match_mean_var, nb_call_expectation, nb_mean_var, nb_pmf,
    verify_call_expectation_envelopes, CallQuery, NBParams, SeriesControl,
};
use nbcall_core::stein::{
    crude_delta_envelope, piecewise_delta_envelope, verify_series_inequalities,
};
use proptest::prelude::*;

fn ctl() -> SeriesControl {
    SeriesControl::default()
}

#[test]
fn convexity_certificates_cover_large_mean_truncation() {
    // Regression case: mean ~68 makes the relative truncation defect
    // larger than the raw 1e-12 additive slack, so the certified form
    // of the inequality is the one that must hold.
    let prm = NBParams::new(29.35057840776945, 0.3).unwrap();
    let at = |zz: f64| {
        let s = nb_call_expectation(prm, CallQuery::new(zz).unwrap(), ctl()).unwrap();
        (s.value, s.tail_bound)
    };
    let (e0, t0) = at(0.0);
    let (e1, _) = at(0.5);
    let (e2, t2) = at(1.0);
    assert!(e1 <= (e0 + t0 + e2 + t2) / 2.0 + 1e-12);
    assert!(e1 <= e0 + t0 + 1e-12);
}

proptest! {
    #[test]
    fn matching_round_trips_mean(mu in 1e-3f64..50.0, r in 1.01f64..60.0) {
        let prm = match_mean(mu, r).unwrap();
        let (mean, _) = nb_mean_var(prm);
        prop_assert!((mean - mu).abs() <= 1e-12 * mu);
    }

    #[test]
    fn matching_round_trips_mean_and_variance(mu in 1e-2f64..20.0, excess in 1e-3f64..10.0) {
        let var = mu + excess;
        let prm = match_mean_var(mu, var).unwrap();
        let (mean, variance) = nb_mean_var(prm);
        prop_assert!((mean - mu).abs() <= 1e-12 * mu);
        prop_assert!((variance - var).abs() <= 1e-12 * var);
    }

    #[test]
    fn pmf_mass_and_tail_account_for_one(r in 0.2f64..40.0, p in 0.05f64..0.99) {
        let prm = NBParams::new(r, p).unwrap();
        let d = DiscreteDist::negative_binomial(prm, 1e-13).unwrap();
        let mass: f64 = d.probs().iter().sum();
        prop_assert!((mass + d.tail_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn call_expectation_is_monotone_convex_lipschitz(
        r in 1.01f64..30.0,
        p in 0.3f64..0.97,
        z in 0.0f64..40.0,
    ) {
        // Computed values sit within [value, value + tail_bound] of the
        // exact ones, so the exact-value inequalities are checked with
        // the certificates carried through.
        let prm = NBParams::new(r, p).unwrap();
        let at = |zz: f64| {
            let s = nb_call_expectation(prm, CallQuery::new(zz).unwrap(), ctl()).unwrap();
            (s.value, s.tail_bound)
        };
        let (e0, t0) = at(z);
        let (e1, _t1) = at(z + 0.5);
        let (e2, t2) = at(z + 1.0);
        prop_assert!(e1 <= e0 + t0 + 1e-12);
        prop_assert!(e1 <= (e0 + t0 + e2 + t2) / 2.0 + 1e-12);
        let (e1f, t1f) = at(z + 1.0);
        let drop = e0 + t0 - e1f;
        prop_assert!(drop >= -1e-12);
        prop_assert!(e0 - (e1f + t1f) <= 1.0 + 1e-12);
    }

    #[test]
    fn expectation_envelopes_never_fail(
        r in 1.01f64..30.0,
        p in 0.3f64..0.98,
        z in 0.0f64..80.0,
    ) {
        let prm = NBParams::new(r, p).unwrap();
        let rep = verify_call_expectation_envelopes(prm, CallQuery::new(z).unwrap(), ctl()).unwrap();
        prop_assert!(rep.passes(1e-12));
    }

    #[test]
    fn crude_envelope_dominates_piecewise(
        r in 1.01f64..40.0,
        p in 0.2f64..0.98,
        z in 1.0001f64..100.0,
        k in 1u64..120,
    ) {
        let prm = NBParams::new(r, p).unwrap();
        let strike = CallQuery::new(z).unwrap();
        let (branch, _) = piecewise_delta_envelope(prm, strike, k).unwrap();
        let crude = crude_delta_envelope(prm, strike).unwrap();
        prop_assert!(crude >= branch * (1.0 - 1e-12));
    }

    #[test]
    fn series_inequalities_hold(r in 1.01f64..20.0, p in 0.3f64..0.97, k in 1u64..50) {
        let prm = NBParams::new(r, p).unwrap();
        let rep = verify_series_inequalities(prm, k, 1000).unwrap();
        prop_assert!(rep.passes(1e-10));
    }

    #[test]
    fn unit_shift_distance_stays_in_unit_interval(q in 0.01f64..0.9) {
        let d = DiscreteDist::geometric(q, 1e-14).unwrap();
        let t = d.dtv_unit_shift();
        prop_assert!((0.0..=1.0).contains(&t));
    }

    #[test]
    fn pmf_values_are_probabilities(r in 0.2f64..60.0, p in 0.05f64..0.99, k in 0u64..400) {
        let prm = NBParams::new(r, p).unwrap();
        let v = nb_pmf(prm, k);
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
