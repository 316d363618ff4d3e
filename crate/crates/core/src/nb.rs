//! Negative binomial primitives: pmf, moments, the call-function
//! expectation series, expectation envelopes, and moment matching.
//!
//! The distribution is parameterized on the non-negative integers by
//!
//! ```text
//! P(N = k) = C(r+k-1, k) p^r q^k,   r > 0, q = 1 - p in (0, 1),
//! ```
//!
//! with mean `rq/p` and variance `rq/p^2`. The call function is
//! `f_z(k) = (k - z)^+` and its expectation `E[(N - z)^+]` is evaluated by
//! a certified truncated series.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Negative binomial parameter pair `(r, p)` with `q = 1 - p` stored
/// alongside so that `p + q = 1` holds exactly as represented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NBParams {
    r: f64,
    p: f64,
    q: f64,
}

impl NBParams {
    /// Validates `r > 0` and `p` in `(0, 1)`.
    ///
    /// Dispersions `r <= 1` are accepted here so that plain distribution
    /// queries (pmf, moments, call expectations) remain available; the
    /// error-bound operations additionally require `r > 1` and enforce it
    /// through [`NBParams::require_dispersion_above_one`].
    pub fn new(r: f64, p: f64) -> Result<Self> {
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "r",
                value: r,
                reason: "dispersion must be finite and positive",
            });
        }
        if !p.is_finite() || p <= 0.0 || p >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "p",
                value: p,
                reason: "success probability must lie strictly inside (0, 1)",
            });
        }
        Ok(Self { r, p, q: 1.0 - p })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// The bound machinery assumes `r > 1`; callers of those operations
    /// go through this check so that the failure names the assumption.
    pub fn require_dispersion_above_one(&self) -> Result<()> {
        if self.r > 1.0 {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "error bounds require dispersion r > 1 (got r = {})",
                self.r
            )))
        }
    }

    /// Mode of the pmf, used as the point after which the term ratio of
    /// the call series is provably decreasing.
    pub(crate) fn mode(&self) -> f64 {
        if self.r > 1.0 {
            ((self.r - 1.0) * self.q / self.p).floor()
        } else {
            0.0
        }
    }
}

/// Strike (attachment level) of the call function `f_z(k) = (k - z)^+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CallQuery {
    z: f64,
}

impl CallQuery {
    pub fn new(z: f64) -> Result<Self> {
        if !z.is_finite() || z < 0.0 {
            return Err(Error::InvalidParameter {
                name: "z",
                value: z,
                reason: "strike must be finite and non-negative",
            });
        }
        Ok(Self { z })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Asserts `z > 1`, the domain of the non-uniform envelopes.
    pub fn require_above_one(&self) -> Result<()> {
        if self.z > 1.0 {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "non-uniform envelopes require z > 1 (got z = {})",
                self.z
            )))
        }
    }
}

/// Truncation policy for the certified series evaluations.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesControl {
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl SeriesControl {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(Error::InvalidParameter {
                name: "rel_tol",
                value: rel_tol,
                reason: "relative tolerance must lie in (0, 1)",
            });
        }
        if max_terms == 0 {
            return Err(Error::InvalidParameter {
                name: "max_terms",
                value: 0.0,
                reason: "term cap must be at least 1",
            });
        }
        Ok(Self { rel_tol, max_terms })
    }
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_terms: 1_000_000,
        }
    }
}

/// A certified truncated series value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesSum {
    pub value: f64,
    /// Upper bound on the dropped tail (absolute).
    pub tail_bound: f64,
    pub terms: usize,
}

/// Log-pmf via log-gamma: `lnC(r+k-1, k) + r ln p + k ln q`.
pub fn nb_ln_pmf(params: NBParams, k: u64) -> f64 {
    let kf = k as f64;
    let (r, p, q) = (params.r(), params.p(), params.q());
    ln_gamma(r + kf) - ln_gamma(kf + 1.0) - ln_gamma(r) + r * p.ln() + kf * q.ln()
}

/// Pmf value, computed in log space and exponentiated at the end.
pub fn nb_pmf(params: NBParams, k: u64) -> f64 {
    nb_ln_pmf(params, k).exp()
}

/// `(mean, variance) = (rq/p, rq/p^2)`.
pub fn nb_mean_var(params: NBParams) -> (f64, f64) {
    let mean = params.r() * params.q() / params.p();
    (mean, mean / params.p())
}

/// Certified evaluation of `E[(N - z)^+] = sum_{k > z} (k - z) P(N = k)`.
///
/// The first contributing index is `floor(z) + 1`: for integer z the term
/// at `k = z` vanishes, and for fractional z this equals the ceiling.
/// Terms follow the pmf recurrence `f(k+1) = f(k) q (r+k) / (k+1)`. Once
/// the index passes both the mode and the strike, the remaining term
/// ratios are dominated by a computable cap < 1, which certifies the tail
/// by a geometric series. Summation stops when the certified tail drops
/// below `rel_tol` relative to the partial sum.
pub fn nb_call_expectation(
    params: NBParams,
    strike: CallQuery,
    ctl: SeriesControl,
) -> Result<SeriesSum> {
    let z = strike.z();
    let (r, q) = (params.r(), params.q());
    let k0 = z.floor() + 1.0;
    let mode = params.mode();

    let mut f = nb_ln_pmf(params, k0 as u64).exp();
    let mut sum = KahanSum::new();
    let mut k = k0;
    let mut terms = 0usize;
    let mut last_tail = f64::INFINITY;

    loop {
        let t = (k - z) * f;
        sum.add(t);
        terms += 1;

        if k > mode && k > z + 1.0 {
            // For r >= 1 both ratio factors decrease in k, so the current
            // ratio caps every later one; for r < 1 the pmf factor stays
            // below q while the call factor still decreases.
            let call_fac = (k + 1.0 - z) / (k - z);
            let cap = if r >= 1.0 {
                (q * (r + k) / (k + 1.0)) * call_fac
            } else {
                q * call_fac
            };
            if cap < 1.0 {
                let tail = t * cap / (1.0 - cap);
                last_tail = tail;
                let s = sum.value();
                if tail <= ctl.rel_tol * s.abs() || tail < 1e-300 {
                    return Ok(SeriesSum {
                        value: s,
                        tail_bound: tail.max(0.0),
                        terms,
                    });
                }
            }
        }

        if terms >= ctl.max_terms {
            return Err(Error::NonConvergence {
                partial: sum.value(),
                tail_bound: last_tail,
                terms,
            });
        }
        f *= q * (r + k) / (k + 1.0);
        k += 1.0;
    }
}

/// Slack report for the two closed-form envelopes of `E[(N - z)^+]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CallExpectationEnvelopes {
    pub expectation: f64,
    /// `rq/p - E[(N-z)^+]`, valid for every z >= 0.
    pub mean_slack: f64,
    /// `r(r+1)q^2/(z p^2) - E[(N-z)^+]`, valid for z > 1.
    pub decay_slack: Option<f64>,
}

impl CallExpectationEnvelopes {
    pub fn passes(&self, tol: f64) -> bool {
        self.mean_slack >= -tol && self.decay_slack.is_none_or(|s| s >= -tol)
    }
}

/// Checks `E[(N-z)^+] <= rq/p` (all z) and `E[(N-z)^+] <= r(r+1)q^2/(z p^2)`
/// (z > 1), returning the slack of each.
pub fn verify_call_expectation_envelopes(
    params: NBParams,
    strike: CallQuery,
    ctl: SeriesControl,
) -> Result<CallExpectationEnvelopes> {
    let e = nb_call_expectation(params, strike, ctl)?.value;
    let (r, p, q) = (params.r(), params.p(), params.q());
    let z = strike.z();
    let mean_env = r * q / p;
    let decay_slack = if z > 1.0 {
        Some(r * (r + 1.0) * q * q / (z * p * p) - e)
    } else {
        None
    };
    Ok(CallExpectationEnvelopes {
        expectation: e,
        mean_slack: mean_env - e,
        decay_slack,
    })
}

/// Chooses `p` so that the mean `rq/p` equals `mu` for the given `r`:
/// `p = r / (r + mu)`.
pub fn match_mean(mu: f64, r: f64) -> Result<NBParams> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "mu",
            value: mu,
            reason: "target mean must be finite and positive",
        });
    }
    NBParams::new(r, r / (r + mu))
}

/// Solves both parameters from the target mean and variance:
/// `p = mu/var`, `r = mu^2/(var - mu)`.
///
/// Requires `var > mu > 0` (over-dispersion). A resulting `r <= 1` is not
/// an error here; bound operations reject it later with a named message,
/// so callers can still inspect the matched parameters.
pub fn match_mean_var(mu: f64, var: f64) -> Result<NBParams> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "mu",
            value: mu,
            reason: "target mean must be finite and positive",
        });
    }
    if !var.is_finite() || var <= mu {
        return Err(Error::Infeasible(format!(
            "mean/variance matching requires Var > E (got E = {mu}, Var = {var})"
        )));
    }
    NBParams::new(mu * mu / (var - mu), mu / var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(r: f64, p: f64) -> NBParams {
        NBParams::new(r, p).unwrap()
    }

    fn ctl() -> SeriesControl {
        SeriesControl::default()
    }

    /// Direct product-form pmf for small k: C(r+k-1,k) accumulated as a
    /// running product. Independent of the log-gamma path.
    fn pmf_product_oracle(r: f64, p: f64, k: u64) -> f64 {
        let mut coeff = 1.0;
        for i in 1..=k {
            coeff *= (r + i as f64 - 1.0) / i as f64;
        }
        coeff * p.powf(r) * (1.0 - p).powi(k as i32)
    }

    #[test]
    fn pmf_at_zero_is_p_to_the_r() {
        assert!((nb_pmf(params(2.0, 0.5), 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pmf_at_one() {
        // C(2,1) * 0.25 * 0.5
        assert!((nb_pmf(params(2.0, 0.5), 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pmf_matches_product_oracle() {
        let p = params(10.0, 0.95);
        let got = nb_pmf(p, 3);
        let want = pmf_product_oracle(10.0, 0.95, 3);
        assert!((got - want).abs() / want < 1e-13);
    }

    #[test]
    fn pmf_stays_in_unit_interval_at_scale() {
        let p = params(75.0, 0.76);
        for k in 0..500 {
            let v = nb_pmf(p, k);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn mean_var_closed_forms() {
        let (m, v) = nb_mean_var(params(2.0, 0.5));
        assert!((m - 2.0).abs() < 1e-15);
        assert!((v - 4.0).abs() < 1e-15);

        let (m, _) = nb_mean_var(params(10.0, 0.95));
        assert!((m - 10.0 * 0.05 / 0.95).abs() < 1e-15);
        assert!((m - 0.5263158).abs() < 1e-6);
    }

    #[test]
    fn variance_always_exceeds_mean() {
        for &(r, p) in &[(1.5, 0.3), (10.0, 0.95), (75.0, 0.7), (0.5, 0.5)] {
            let (m, v) = nb_mean_var(params(r, p));
            assert!(v > m);
        }
    }

    #[test]
    fn call_expectation_at_zero_is_the_mean() {
        let p = params(2.0, 0.5);
        let e = nb_call_expectation(p, CallQuery::new(0.0).unwrap(), ctl()).unwrap();
        // The series stops once the certified tail is below rel_tol of
        // the partial sum, so the defect is at most ~2 * rel_tol here.
        assert!((e.value - 2.0).abs() < 1e-11);
        assert!((e.value + e.tail_bound - 2.0).abs() < 5e-12);
    }

    #[test]
    fn call_expectation_vanishes_far_in_the_tail() {
        let p = params(2.0, 0.5);
        let e = nb_call_expectation(p, CallQuery::new(200.0).unwrap(), ctl()).unwrap();
        assert!(e.value <= 1e-12);
    }

    #[test]
    fn call_expectation_matches_long_direct_summation() {
        // Oracle: brute-force summation over 10^6 terms, no early stop.
        let (r, p, z) = (10.0, 0.95, 1.5);
        let prm = params(r, p);
        let mut oracle = KahanSum::new();
        let mut f = nb_pmf(prm, 2);
        let mut k = 2.0;
        for _ in 0..1_000_000u64 {
            oracle.add((k - z) * f);
            f *= (1.0 - p) * (r + k) / (k + 1.0);
            k += 1.0;
            if f == 0.0 {
                break;
            }
        }
        let got = nb_call_expectation(prm, CallQuery::new(z).unwrap(), ctl()).unwrap();
        assert!((got.value - oracle.value()).abs() <= 1e-10 * oracle.value());
        assert!(got.tail_bound <= 1e-12 * got.value.max(1e-300));
    }

    #[test]
    fn call_expectation_respects_term_cap() {
        let p = params(2.0, 0.5);
        let tiny = SeriesControl::new(1e-12, 3).unwrap();
        match nb_call_expectation(p, CallQuery::new(0.0).unwrap(), tiny) {
            Err(Error::NonConvergence { partial, .. }) => assert!(partial > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn expectation_envelopes_tight_at_zero() {
        let rep = verify_call_expectation_envelopes(
            params(2.0, 0.5),
            CallQuery::new(0.0).unwrap(),
            ctl(),
        )
        .unwrap();
        assert!(rep.mean_slack.abs() < 1e-11);
        assert!(rep.decay_slack.is_none());
        assert!(rep.passes(1e-12));
    }

    #[test]
    fn expectation_envelopes_hold_above_one() {
        let rep = verify_call_expectation_envelopes(
            params(10.0, 0.95),
            CallQuery::new(2.0).unwrap(),
            ctl(),
        )
        .unwrap();
        assert!(rep.passes(1e-12));
        assert!(rep.decay_slack.unwrap() > 0.0);
    }

    #[test]
    fn expectation_envelopes_hold_on_random_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r = rng.gen_range(1.01..25.0);
            let p = rng.gen_range(0.3..0.98);
            let prm = params(r, p);
            let mean = r * (1.0 - p) / p;
            let z = rng.gen_range(0.0..3.0 * mean + 2.0);
            let rep =
                verify_call_expectation_envelopes(prm, CallQuery::new(z).unwrap(), ctl()).unwrap();
            assert!(rep.passes(1e-12), "failed at r={r} p={p} z={z}: {rep:?}");
        }
    }

    #[test]
    fn match_mean_recovers_p() {
        let prm = match_mean(0.5263158, 10.0).unwrap();
        assert!((prm.p() - 0.95).abs() < 1e-7);
        let (m, _) = nb_mean_var(prm);
        assert!((m - 0.5263158).abs() <= 1e-12 * 0.5263158);

        let prm = match_mean(2.0, 2.0).unwrap();
        assert!((prm.p() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn match_mean_rejects_nonpositive_mean() {
        assert!(match_mean(0.0, 5.0).is_err());
        assert!(match_mean(-1.0, 5.0).is_err());
    }

    #[test]
    fn match_mean_var_inverts_moments() {
        let prm = match_mean_var(2.0, 4.0).unwrap();
        assert!((prm.r() - 2.0).abs() < 1e-12);
        assert!((prm.p() - 0.5).abs() < 1e-12);

        let prm = match_mean_var(1.63743, 1.788585).unwrap();
        assert!((prm.r() - 17.7379).abs() < 2e-3);
        assert!((prm.p() - 0.915494).abs() < 1e-5);
        let (m, v) = nb_mean_var(prm);
        assert!((m - 1.63743).abs() <= 1e-12 * 1.63743);
        assert!((v - 1.788585).abs() <= 1e-12 * 1.788585);
    }

    #[test]
    fn match_mean_var_rejects_underdispersion() {
        match match_mean_var(2.0, 2.0) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn pmf_mass_plus_tail_is_one() {
        for &(r, p) in &[(2.0, 0.5), (10.0, 0.95), (30.0, 0.4), (75.0, 0.76)] {
            let prm = params(r, p);
            let d = crate::dist::DiscreteDist::negative_binomial(prm, 1e-13).unwrap();
            let mass: f64 = d.probs().iter().sum();
            assert!(
                (mass + d.tail_mass() - 1.0).abs() < 1e-10,
                "mass defect at r={r} p={p}"
            );
        }
    }

    #[test]
    fn call_expectation_is_convex_and_lipschitz_in_z() {
        // Exact-value inequalities checked through the truncation
        // certificates: computed values lie in [exact - tail, exact].
        let prm = params(6.0, 0.55);
        let c = ctl();
        let at = |z: f64| {
            let s = nb_call_expectation(prm, CallQuery::new(z).unwrap(), c).unwrap();
            (s.value, s.tail_bound)
        };
        let mut z = 0.0;
        while z < 25.0 {
            let (e0, t0) = at(z);
            let (e1, _) = at(z + 0.5);
            let (e2, t2) = at(z + 1.0);
            assert!(e1 <= (e0 + t0 + e2 + t2) / 2.0 + 1e-12, "convexity at z={z}");
            assert!(e0 + t0 >= e1 - 1e-12, "monotonicity at z={z}");
            let drop_hi = e0 + t0 - e2;
            let drop_lo = e0 - (e2 + t2);
            assert!(drop_hi >= -1e-12 && drop_lo <= 1.0 + 1e-12, "Lipschitz at z={z}");
            z += 0.25;
        }
    }
}
