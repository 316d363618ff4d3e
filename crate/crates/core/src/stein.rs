//! Stein machinery for the negative binomial law under the call function.
//!
//! The operator is `A g(k) = q(r+k) g(k+1) - k g(k)`; it annihilates
//! expectations under NB(r, p). For the call function the equation
//!
//! ```text
//! A g(k) = (k - z)^+ - E[(N - z)^+]
//! ```
//!
//! has the explicit solution `g_z` with `g_z(0) = 0` and, for k >= 1,
//!
//! ```text
//! g_z(k) = - sum_{j>=k} [prod_{m=k}^{j-1} (r+m)/m] (1/j) q^{j-k}
//!                       [ (j - z)^+ - E[(N - z)^+] ].
//! ```
//!
//! The rising-factorial ratio is accumulated as a running log-sum; the
//! bracket is applied before exponentiation so individual terms never
//! overflow before the certified truncation point.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nb::{nb_call_expectation, CallQuery, NBParams, SeriesControl, SeriesSum};
use crate::numeric::{pow_neg, powm1_neg, KahanSum};

/// `A g(k) = q(r+k) g(k+1) - k g(k)` for an arbitrary integer-indexed g.
pub fn stein_apply<F: Fn(u64) -> f64>(params: NBParams, g: F, k: u64) -> f64 {
    let kf = k as f64;
    params.q() * (params.r() + kf) * g(k + 1) - kf * g(k)
}

/// Solution `g_z(k)` of the Stein equation, with a truncation certificate.
pub fn solve(params: NBParams, strike: CallQuery, k: u64, ctl: SeriesControl) -> Result<SeriesSum> {
    if k == 0 {
        return Ok(SeriesSum {
            value: 0.0,
            tail_bound: 0.0,
            terms: 0,
        });
    }
    let (r, q) = (params.r(), params.q());
    let z = strike.z();
    let call = nb_call_expectation(params, strike, ctl)?;
    let expect = call.value;

    let kf = k as f64;
    let mut log_w = -kf.ln(); // leading coefficient is 1/k
    let mut sum = KahanSum::new();
    let mut j = kf;
    let mut terms = 0usize;
    let mut last_tail = f64::INFINITY;

    loop {
        let bracket = (j - z).max(0.0) - expect;
        if bracket != 0.0 {
            let magnitude = log_w + bracket.abs().ln();
            sum.add(bracket.signum() * magnitude.exp());
        }
        terms += 1;

        // Past z + E the bracket is positive and the term ratio
        // [q (r+j)/(j+1)] * [(j+1-z-E)/(j-z-E)] is capped by a quantity
        // that decreases in j, giving a geometric tail bound.
        if j > z + expect + 1.0 {
            let bracket_fac = (j + 1.0 - z - expect) / (j - z - expect);
            let cap = if r >= 1.0 {
                (q * (r + j) / (j + 1.0)) * bracket_fac
            } else {
                q * bracket_fac
            };
            if cap < 1.0 {
                let t_abs = (log_w + bracket.abs().ln()).exp();
                let tail = t_abs * cap / (1.0 - cap);
                last_tail = tail;
                let s = sum.value();
                let converged = if q < 1e-6 {
                    // Near-degenerate p: partial sums can sit at 0, use
                    // the absolute rule.
                    tail <= ctl.rel_tol
                } else {
                    tail <= ctl.rel_tol * s.abs()
                };
                if converged || tail < 1e-300 {
                    return Ok(SeriesSum {
                        value: -s,
                        tail_bound: tail.max(0.0),
                        terms,
                    });
                }
            }
        }

        if terms >= ctl.max_terms {
            return Err(Error::NonConvergence {
                partial: -sum.value(),
                tail_bound: last_tail,
                terms,
            });
        }
        log_w += q.ln() + (r + j).ln() - (j + 1.0).ln();
        j += 1.0;
    }
}

/// First forward difference `g_z(k+1) - g_z(k)`.
pub fn delta(params: NBParams, strike: CallQuery, k: u64, ctl: SeriesControl) -> Result<f64> {
    Ok(solve(params, strike, k + 1, ctl)?.value - solve(params, strike, k, ctl)?.value)
}

/// Uniform envelope for the solution itself: `|g_z(k)| <= p^{-(r+1)}`.
pub fn uniform_solution_envelope(params: NBParams) -> f64 {
    pow_neg(params.p(), params.r() + 1.0)
}

/// Uniform envelope for the forward difference:
/// `|Δg_z(k)| <= 2 p^{-(r+1)} - p^{-1}`.
pub fn uniform_delta_envelope(params: NBParams) -> f64 {
    2.0 * pow_neg(params.p(), params.r() + 1.0) - 1.0 / params.p()
}

/// Which branch of the piecewise non-uniform difference envelope applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DeltaEnvelopeBranch {
    /// k >= z
    AboveStrike,
    /// 2 <= k < z
    BelowStrike,
    /// k = 1 (and below the strike, since z > 1)
    AtOne,
}

/// Piecewise envelope for `|Δg_z(k)|`, valid for z > 1 and k >= 1:
///
/// * k >= z:      `(1/z)(2 p^{-(r+1)} - p^{-1})`
/// * 2 <= k < z:  `(1/z)((1 + q^{-1}) p^{-(r+2)} - p^{-2})`
/// * k = 1:       `((r+1)/z)(2 p^{-(r+2)} - p^{-2})`
///
/// Overflow propagates as `+inf`, which is still a valid upper bound.
pub fn piecewise_delta_envelope(
    params: NBParams,
    strike: CallQuery,
    k: u64,
) -> Result<(f64, DeltaEnvelopeBranch)> {
    strike.require_above_one()?;
    if k == 0 {
        return Err(Error::Precondition(
            "piecewise envelope is stated for k >= 1".into(),
        ));
    }
    let (r, p, q) = (params.r(), params.p(), params.q());
    let z = strike.z();
    let kf = k as f64;
    let value = if kf >= z {
        (
            (2.0 * pow_neg(p, r + 1.0) - 1.0 / p) / z,
            DeltaEnvelopeBranch::AboveStrike,
        )
    } else if k >= 2 {
        (
            ((1.0 + 1.0 / q) * pow_neg(p, r + 2.0) - 1.0 / (p * p)) / z,
            DeltaEnvelopeBranch::BelowStrike,
        )
    } else {
        (
            (r + 1.0) / z * (2.0 * pow_neg(p, r + 2.0) - 1.0 / (p * p)),
            DeltaEnvelopeBranch::AtOne,
        )
    };
    Ok(value)
}

/// Crude z-dependent uniform envelope dominating every branch of
/// [`piecewise_delta_envelope`]:
/// `((r+1)/z)((1 + q^{-1}) p^{-(r+2)} - p^{-2})`, z > 1.
pub fn crude_delta_envelope(params: NBParams, strike: CallQuery) -> Result<f64> {
    strike.require_above_one()?;
    let (r, p, q) = (params.r(), params.p(), params.q());
    Ok((r + 1.0) / strike.z() * ((1.0 + 1.0 / q) * pow_neg(p, r + 2.0) - 1.0 / (p * p)))
}

/// Envelope comparison record: `slack = envelope - |value|`; a pass is
/// `slack >= -1e-9 * max(1, envelope)` since envelopes reach 1e10 and
/// beyond at portfolio scale.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub k: u64,
    pub z: f64,
    pub value: f64,
    pub envelope: f64,
    pub slack: f64,
    pub envelope_name: &'static str,
}

impl EnvelopeReport {
    pub fn new(k: u64, z: f64, value: f64, envelope: f64, envelope_name: &'static str) -> Self {
        Self {
            k,
            z,
            value,
            envelope,
            slack: envelope - value.abs(),
            envelope_name,
        }
    }

    pub fn passes(&self) -> bool {
        self.slack >= -1e-9 * self.envelope.max(1.0)
    }
}

/// Memoizing wrapper around [`solve`] for a fixed `(params, z)`. Entries
/// are write-once per k and the map is safe for concurrent readers.
pub struct SteinSolution {
    params: NBParams,
    strike: CallQuery,
    ctl: SeriesControl,
    memo: Mutex<HashMap<u64, SeriesSum>>,
}

impl SteinSolution {
    pub fn new(params: NBParams, strike: CallQuery, ctl: SeriesControl) -> Self {
        Self {
            params,
            strike,
            ctl,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn params(&self) -> NBParams {
        self.params
    }

    pub fn strike(&self) -> CallQuery {
        self.strike
    }

    pub fn g(&self, k: u64) -> Result<f64> {
        Ok(self.g_certified(k)?.value)
    }

    pub fn g_certified(&self, k: u64) -> Result<SeriesSum> {
        if let Some(hit) = self.memo.lock().unwrap().get(&k) {
            return Ok(*hit);
        }
        let computed = solve(self.params, self.strike, k, self.ctl)?;
        self.memo.lock().unwrap().entry(k).or_insert(computed);
        Ok(computed)
    }

    pub fn delta(&self, k: u64) -> Result<f64> {
        Ok(self.g(k + 1)? - self.g(k)?)
    }
}

/// Normalized slacks for the five closed-form series inequalities used by
/// the envelope proofs. Each left side is a monotone-increasing partial
/// sum; slack is `(rhs - partial) / max(1, rhs)` so that a pass is
/// `slack >= -tol` independent of the envelope's magnitude.
///
/// The last two inequalities require k >= 2 and are `None` at k = 1.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesInequalityReport {
    pub k: u64,
    pub n_terms: usize,
    pub rising_over_falling: f64,
    pub shifted_denominator: f64,
    pub skip_first: f64,
    pub extended_numerator: Option<f64>,
    pub extended_denominator: Option<f64>,
}

impl SeriesInequalityReport {
    pub fn slacks(&self) -> Vec<f64> {
        let mut v = vec![
            self.rising_over_falling,
            self.shifted_denominator,
            self.skip_first,
        ];
        if let Some(s) = self.extended_numerator {
            v.push(s);
        }
        if let Some(s) = self.extended_denominator {
            v.push(s);
        }
        v
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.slacks().iter().all(|&s| s >= -tol)
    }
}

fn normalized_slack(rhs: f64, partial: f64) -> f64 {
    (rhs - partial) / rhs.abs().max(1.0)
}

/// Evaluates `n_terms` partial sums of the five series and compares each
/// against its closed-form right-hand side.
pub fn verify_series_inequalities(
    params: NBParams,
    k: u64,
    n_terms: usize,
) -> Result<SeriesInequalityReport> {
    if k == 0 {
        return Err(Error::Precondition(
            "series inequalities are stated for k >= 1".into(),
        ));
    }
    let (r, p, q) = (params.r(), params.p(), params.q());
    let kf = k as f64;

    // (1) sum_j prod_{m=0}^{j-1} (r+k+m)/(k+m) q^j  <=  p^{-(r+1)} - 1
    let s1 = {
        let mut sum = KahanSum::new();
        let mut t = 1.0;
        for j in 0..n_terms {
            let jf = j as f64;
            t *= q * (r + kf + jf) / (kf + jf);
            sum.add(t);
        }
        normalized_slack(powm1_neg(p, r + 1.0), sum.value())
    };

    // (2) sum_j prod_{m=0}^{j-1} (r+k+m)/(k+1+m) q^j  <=  (p^{-r}-1)/(rq) - 1
    let s2 = {
        let mut sum = KahanSum::new();
        let mut t = 1.0;
        for j in 0..n_terms {
            let jf = j as f64;
            t *= q * (r + kf + jf) / (kf + 1.0 + jf);
            sum.add(t);
        }
        normalized_slack(powm1_neg(p, r) / (r * q) - 1.0, sum.value())
    };

    // (3) sum_{j>=2} prod_{m=1}^{j-1} (r+k+m)/(k+m) q^j  <=  (p^{-(r+1)}-1)/r - q
    let s3 = {
        let mut sum = KahanSum::new();
        let mut t = q * q * (r + kf + 1.0) / (kf + 1.0);
        for j in 2..2 + n_terms {
            sum.add(t);
            let jf = j as f64;
            t *= q * (r + kf + jf) / (kf + jf);
        }
        normalized_slack(powm1_neg(p, r + 1.0) / r - q, sum.value())
    };

    // (4) sum_j prod (r+k+1..r+j+k) / (k..j+k-1) q^j <= (p^{-(r+2)}-1)/((r+1)q) - 1,  k >= 2
    let s4 = if k >= 2 {
        let mut sum = KahanSum::new();
        let mut t = q * (r + kf + 1.0) / kf;
        for j in 1..=n_terms {
            sum.add(t);
            let jf = j as f64;
            t *= q * (r + kf + jf + 1.0) / (kf + jf);
        }
        Some(normalized_slack(
            powm1_neg(p, r + 2.0) / ((r + 1.0) * q) - 1.0,
            sum.value(),
        ))
    } else {
        None
    };

    // (5) sum_j prod (r+k..r+j+k-1) / (k..j+k) q^j <= (p^{-r}-1)/(r(r+1)q^2) - 1/2,  k >= 2
    let s5 = if k >= 2 {
        let mut sum = KahanSum::new();
        let mut t = q * (r + kf) / (kf * (kf + 1.0));
        for j in 1..=n_terms {
            sum.add(t);
            let jf = j as f64;
            t *= q * (r + kf + jf) / (kf + jf + 1.0);
        }
        Some(normalized_slack(
            powm1_neg(p, r) / (r * (r + 1.0) * q * q) - 0.5,
            sum.value(),
        ))
    } else {
        None
    };

    Ok(SeriesInequalityReport {
        k,
        n_terms,
        rising_over_falling: s1,
        shifted_denominator: s2,
        skip_first: s3,
        extended_numerator: s4,
        extended_denominator: s5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn params(r: f64, p: f64) -> NBParams {
        NBParams::new(r, p).unwrap()
    }

    fn q(z: f64) -> CallQuery {
        CallQuery::new(z).unwrap()
    }

    fn ctl() -> SeriesControl {
        SeriesControl::default()
    }

    #[test]
    fn solution_is_zero_at_origin() {
        for &(r, p, z) in &[(2.0, 0.5, 0.0), (10.0, 0.95, 3.5), (25.0, 0.4, 17.0)] {
            let s = solve(params(r, p), q(z), 0, ctl()).unwrap();
            assert_eq!(s.value, 0.0);
        }
    }

    #[test]
    fn operator_on_constant_function() {
        let prm = params(3.0, 0.4);
        let c = 2.5;
        let got = stein_apply(prm, |_| c, 0);
        assert!((got - prm.q() * prm.r() * c).abs() < 1e-14);
        assert_eq!(stein_apply(prm, |_| 0.0, 7), 0.0);
    }

    /// Residual oracle: the solution plugged into the operator must
    /// reproduce the call function centered at its NB expectation.
    fn residual_scale(prm: NBParams, k: u64, gk: f64, gk1: f64, rhs: f64) -> f64 {
        let kf = k as f64;
        let operands = prm.q() * (prm.r() + kf) * gk1.abs() + kf * gk.abs();
        1.0_f64.max(rhs.abs()).max(operands)
    }

    #[test]
    fn residual_identity_simple_point() {
        let prm = params(2.0, 0.5);
        let e = nb_call_expectation(prm, q(0.0), ctl()).unwrap().value;
        let g1 = solve(prm, q(0.0), 1, ctl()).unwrap().value;
        let g2 = solve(prm, q(0.0), 2, ctl()).unwrap().value;
        let lhs = prm.q() * (prm.r() + 1.0) * g2 - 1.0 * g1;
        let rhs = 1.0 - e;
        assert!((lhs - rhs).abs() < 1e-9 * residual_scale(prm, 1, g1, g2, rhs));
        // g_z(1) = -1/p when z = 0.
        assert!((g1 + 1.0 / prm.p()).abs() < 1e-11);
    }

    #[test]
    fn residual_identity_on_sweep() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..150 {
            let r = rng.gen_range(1.01..30.0);
            let p = rng.gen_range(0.3..0.98);
            let prm = params(r, p);
            let mean = r * (1.0 - p) / p;
            let z = rng.gen_range(0.0..3.0 * mean);
            let k: u64 = rng.gen_range(0..61);
            let e = nb_call_expectation(prm, q(z), ctl()).unwrap().value;
            let gk = solve(prm, q(z), k, ctl()).unwrap().value;
            let gk1 = solve(prm, q(z), k + 1, ctl()).unwrap().value;
            let lhs = prm.q() * (r + k as f64) * gk1 - k as f64 * gk;
            let rhs = (k as f64 - z).max(0.0) - e;
            let env_scale = 1.0_f64
                .max((prm.q() * (r + k as f64) + k as f64) * uniform_solution_envelope(prm));
            assert!(
                (lhs - rhs).abs() <= 1e-9 * env_scale,
                "residual failed at r={r} p={p} z={z} k={k}"
            );
        }
    }

    #[test]
    fn zero_mean_identity() {
        // E[A g(N)] = 0 for the solution g.
        let prm = params(7.3, 0.6);
        let sol = SteinSolution::new(prm, q(4.2), ctl());
        let mut total = KahanSum::new();
        for k in 0..200u64 {
            let a = prm.q() * (prm.r() + k as f64) * sol.g(k + 1).unwrap()
                - k as f64 * sol.g(k).unwrap();
            total.add(a * crate::nb::nb_pmf(prm, k));
        }
        assert!(total.value().abs() < 1e-9);
    }

    #[test]
    fn uniform_envelopes_hold_including_corner_strikes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..150 {
            let r = rng.gen_range(1.01..25.0);
            let p = rng.gen_range(0.3..0.98);
            let prm = params(r, p);
            let mean = r * (1.0 - p) / p;
            // Forced corner cases: z = 0 and integer z.
            let z = match trial % 3 {
                0 => 0.0,
                1 => rng.gen_range(0..=(3.0 * mean) as u64 + 1) as f64,
                _ => rng.gen_range(0.0..3.0 * mean),
            };
            let k: u64 = rng.gen_range(0..40);
            let sol = SteinSolution::new(prm, q(z), ctl());
            let gk = sol.g(k).unwrap();
            let report =
                EnvelopeReport::new(k, z, gk, uniform_solution_envelope(prm), "solution-uniform");
            assert!(report.passes(), "{report:?}");
            let d = sol.delta(k).unwrap();
            let report = EnvelopeReport::new(k, z, d, uniform_delta_envelope(prm), "delta-uniform");
            assert!(report.passes(), "{report:?}");
        }
    }

    #[test]
    fn delta_at_zero_is_g_one() {
        let prm = params(4.0, 0.7);
        let d = delta(prm, q(2.5), 0, ctl()).unwrap();
        let g1 = solve(prm, q(2.5), 1, ctl()).unwrap().value;
        assert_eq!(d, g1);
    }

    #[test]
    fn piecewise_envelope_branch_arithmetic() {
        let prm = params(2.0, 0.5);
        let (v, b) = piecewise_delta_envelope(prm, q(2.0), 5).unwrap();
        assert_eq!(b, DeltaEnvelopeBranch::AboveStrike);
        assert!((v - 7.0).abs() < 1e-12);

        let (v, b) = piecewise_delta_envelope(prm, q(3.0), 2).unwrap();
        assert_eq!(b, DeltaEnvelopeBranch::BelowStrike);
        assert!((v - 44.0 / 3.0).abs() < 1e-12);

        let (v, b) = piecewise_delta_envelope(prm, q(3.0), 1).unwrap();
        assert_eq!(b, DeltaEnvelopeBranch::AtOne);
        assert!((v - 28.0).abs() < 1e-12);
    }

    #[test]
    fn piecewise_envelope_requires_strike_above_one() {
        let prm = params(2.0, 0.5);
        assert!(piecewise_delta_envelope(prm, q(1.0), 3).is_err());
        assert!(crude_delta_envelope(prm, q(0.5)).is_err());
    }

    #[test]
    fn crude_envelope_arithmetic_and_decay() {
        let prm = params(2.0, 0.5);
        let v = crude_delta_envelope(prm, q(2.0)).unwrap();
        assert!((v - 66.0).abs() < 1e-12);
        let far = crude_delta_envelope(prm, q(1e12)).unwrap();
        assert!(far < 1e-9);
    }

    #[test]
    fn crude_envelope_dominates_every_branch() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let r = rng.gen_range(1.01..30.0);
            let p = rng.gen_range(0.2..0.98);
            let prm = params(r, p);
            let z = rng.gen_range(1.0001..60.0);
            let k: u64 = rng.gen_range(1..80);
            let (branch, _) = piecewise_delta_envelope(prm, q(z), k).unwrap();
            let crude = crude_delta_envelope(prm, q(z)).unwrap();
            assert!(
                crude >= branch * (1.0 - 1e-12),
                "dominance failed r={r} p={p} z={z} k={k}"
            );
        }
    }

    #[test]
    fn piecewise_envelopes_hold_on_sweep() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..150 {
            let r = rng.gen_range(1.01..20.0);
            let p = rng.gen_range(0.3..0.97);
            let prm = params(r, p);
            let mean = r * (1.0 - p) / p;
            let z = rng.gen_range(1.0001..(3.0 * mean).max(2.0));
            let k: u64 = rng.gen_range(1..50);
            let d = delta(prm, q(z), k, ctl()).unwrap();
            let (env, _) = piecewise_delta_envelope(prm, q(z), k).unwrap();
            let rep = EnvelopeReport::new(k, z, d, env, "delta-piecewise");
            assert!(rep.passes(), "{rep:?} r={r} p={p}");
        }
    }

    #[test]
    fn series_inequality_one_is_tight_at_k_one() {
        // At k = 1 the first inequality is an identity, so the slack
        // decays to zero from above as the term budget grows.
        let prm = params(3.7, 0.55);
        let coarse = verify_series_inequalities(prm, 1, 20).unwrap();
        let fine = verify_series_inequalities(prm, 1, 2000).unwrap();
        assert!(coarse.rising_over_falling > fine.rising_over_falling);
        assert!(fine.rising_over_falling >= -1e-12);
        assert!(fine.rising_over_falling < 1e-9);
        assert!(coarse.extended_numerator.is_none());
        assert!(coarse.extended_denominator.is_none());
    }

    #[test]
    fn series_inequalities_pass_on_sweep() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let r = rng.gen_range(1.01..20.0);
            let p = rng.gen_range(0.3..0.97);
            let k: u64 = rng.gen_range(1..51);
            let rep = verify_series_inequalities(params(r, p), k, 1000).unwrap();
            assert!(rep.passes(1e-10), "{rep:?} r={r} p={p}");
        }
    }

    #[test]
    fn series_partial_sums_are_monotone() {
        let prm = params(5.0, 0.5);
        let mut prev = f64::INFINITY;
        for n in [10, 50, 250, 1000] {
            let rep = verify_series_inequalities(prm, 3, n).unwrap();
            // Growing partial sums mean shrinking slack.
            assert!(rep.shifted_denominator <= prev + 1e-15);
            prev = rep.shifted_denominator;
        }
    }

    #[test]
    fn memoized_solution_matches_direct_solve() {
        let prm = params(6.0, 0.6);
        let sol = SteinSolution::new(prm, q(3.3), ctl());
        for k in [0u64, 1, 5, 9] {
            let direct = solve(prm, q(3.3), k, ctl()).unwrap().value;
            assert_eq!(sol.g(k).unwrap(), direct);
            // Second lookup hits the memo and must agree bit-for-bit.
            assert_eq!(sol.g(k).unwrap(), direct);
        }
    }
}
