//! Finite / truncated distributions on the non-negative integers.
//!
//! A [`DiscreteDist`] stores the pmf on `0..len` together with certified
//! upper bounds on the truncated tail: its mass and its first three
//! moments. Truncation never silently drops probability; every derived
//! quantity can report the slop the tail contributes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nb::{nb_ln_pmf, NBParams};
use crate::numeric::KahanSum;

/// Certified caps on a dropped tail `{k >= k_start}` whose terms start at
/// `first` and decay at least geometrically with `ratio < 1`:
/// `sum_j (k_start + j)^m first ratio^j` for m = 0..3.
fn geometric_tail_caps(first: f64, k_start: f64, ratio: f64) -> (f64, f64, f64, f64) {
    let one = 1.0 - ratio;
    let s0 = 1.0 / one;
    let s1 = ratio / (one * one);
    let s2 = ratio * (1.0 + ratio) / (one * one * one);
    let s3 = ratio * (1.0 + 4.0 * ratio + ratio * ratio) / (one * one * one * one);
    let k = k_start;
    (
        first * s0,
        first * (k * s0 + s1),
        first * (k * k * s0 + 2.0 * k * s1 + s2),
        first * (k * k * k * s0 + 3.0 * k * k * s1 + 3.0 * k * s2 + s3),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscreteDist {
    probs: Vec<f64>,
    tail_mass: f64,
    tail_m1: f64,
    tail_m2: f64,
    tail_m3: f64,
}

impl DiscreteDist {
    /// Exact finite pmf; the probabilities must sum to 1 within 1e-9.
    pub fn from_pmf(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidModel("empty pmf".into()));
        }
        if probs.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidModel(
                "pmf entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "pmf mass {total} is not 1 within 1e-9"
            )));
        }
        Ok(Self {
            probs,
            tail_mass: 0.0,
            tail_m1: 0.0,
            tail_m2: 0.0,
            tail_m3: 0.0,
        })
    }

    /// Truncated pmf with certified tail caps (mass and first three
    /// moments of the dropped part).
    pub fn truncated(
        probs: Vec<f64>,
        tail_mass: f64,
        tail_m1: f64,
        tail_m2: f64,
        tail_m3: f64,
    ) -> Result<Self> {
        if probs.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidModel(
                "pmf entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if total > 1.0 + 1e-9 || total + tail_mass < 1.0 - 1e-9 {
            return Err(Error::InvalidModel(format!(
                "stored mass {total} and tail certificate {tail_mass} do not account for 1"
            )));
        }
        Ok(Self {
            probs,
            tail_mass,
            tail_m1,
            tail_m2,
            tail_m3,
        })
    }

    /// Accumulates a pmf from `(value, probability)` pairs.
    pub fn from_weighted_support(entries: &[(u64, f64)]) -> Result<Self> {
        let max = entries.iter().map(|&(v, _)| v).max().unwrap_or(0);
        let mut probs = vec![0.0; max as usize + 1];
        for &(v, p) in entries {
            probs[v as usize] += p;
        }
        Self::from_pmf(probs)
    }

    pub fn point_mass(k: u64) -> Self {
        let mut probs = vec![0.0; k as usize + 1];
        probs[k as usize] = 1.0;
        Self {
            probs,
            tail_mass: 0.0,
            tail_m1: 0.0,
            tail_m2: 0.0,
            tail_m3: 0.0,
        }
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter {
                name: "p",
                value: p,
                reason: "Bernoulli probability must lie in [0, 1]",
            });
        }
        Self::from_pmf(vec![1.0 - p, p])
    }

    pub fn uniform_upto(m: u64) -> Self {
        let n = m as usize + 1;
        Self {
            probs: vec![1.0 / n as f64; n],
            tail_mass: 0.0,
            tail_m1: 0.0,
            tail_m2: 0.0,
            tail_m3: 0.0,
        }
    }

    /// Geometric law `P(k) = q^k p` (failures before the first success),
    /// truncated where the tail mass `q^K` drops below `tail_tol`. The
    /// tail caps are the exact geometric closed forms.
    pub fn geometric(q: f64, tail_tol: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter {
                name: "q",
                value: q,
                reason: "geometric failure probability must lie in (0, 1)",
            });
        }
        let p = 1.0 - q;
        let k_cut = (tail_tol.ln() / q.ln()).ceil().max(1.0) as usize;
        let mut probs = Vec::with_capacity(k_cut);
        let mut f = p;
        for _ in 0..k_cut {
            probs.push(f);
            f *= q;
        }
        let (mass, m1, m2, m3) = geometric_tail_caps(f, k_cut as f64, q);
        Self::truncated(probs, mass, m1, m2, m3)
    }

    /// Negative binomial pmf truncated once a geometric cap on the term
    /// ratio certifies the remaining mass below `tail_tol`.
    pub fn negative_binomial(params: NBParams, tail_tol: f64) -> Result<Self> {
        let (r, q) = (params.r(), params.q());
        let mut probs = Vec::new();
        let mut f = nb_ln_pmf(params, 0).exp();
        let mut k = 0.0f64;
        let mode = if r > 1.0 { (r - 1.0) * q / (1.0 - q) } else { 0.0 };
        loop {
            let next = f * q * (r + k) / (k + 1.0);
            if k > mode {
                let cap = if r >= 1.0 { q * (r + k + 1.0) / (k + 2.0) } else { q };
                if cap < 1.0 {
                    let (mass, m1, m2, m3) = geometric_tail_caps(next, k + 1.0, cap);
                    if mass <= tail_tol {
                        probs.push(f);
                        return Self::truncated(probs, mass, m1, m2, m3);
                    }
                }
            }
            probs.push(f);
            f = next;
            k += 1.0;
            if probs.len() > 10_000_000 {
                return Err(Error::NonConvergence {
                    partial: probs.iter().sum(),
                    tail_bound: f,
                    terms: probs.len(),
                });
            }
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.probs.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn tail_m1(&self) -> f64 {
        self.tail_m1
    }

    pub fn tail_m2(&self) -> f64 {
        self.tail_m2
    }

    pub fn tail_m3(&self) -> f64 {
        self.tail_m3
    }

    pub fn mean(&self) -> f64 {
        let mut s = KahanSum::new();
        for (k, &p) in self.probs.iter().enumerate() {
            s.add(k as f64 * p);
        }
        s.value()
    }

    pub fn moment2(&self) -> f64 {
        let mut s = KahanSum::new();
        for (k, &p) in self.probs.iter().enumerate() {
            s.add((k as f64) * (k as f64) * p);
        }
        s.value()
    }

    pub fn moment3(&self) -> f64 {
        let mut s = KahanSum::new();
        for (k, &p) in self.probs.iter().enumerate() {
            let kf = k as f64;
            s.add(kf * kf * kf * p);
        }
        s.value()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment2() - m * m
    }

    /// `E[(X - z)^+]` over the stored support, plus an error cap for the
    /// truncated tail. Since `(k - z)^+ <= k`, the tail contributes at
    /// most its first-moment cap.
    pub fn call_expectation(&self, z: f64) -> (f64, f64) {
        let start = (z.floor() + 1.0).max(0.0) as usize;
        let mut s = KahanSum::new();
        for k in start..self.probs.len() {
            s.add((k as f64 - z) * self.probs[k]);
        }
        (s.value(), self.tail_m1)
    }

    /// Total variation distance to the unit shift,
    /// `d_TV(X, X+1) = (1/2) sum_k |P(X=k) - P(X=k-1)|`.
    ///
    /// For truncated supports the result carries an additive uncertainty
    /// of at most [`DiscreteDist::tail_mass`].
    pub fn dtv_unit_shift(&self) -> f64 {
        let mut l1 = self.probs[0].abs();
        for k in 1..self.probs.len() {
            l1 += (self.probs[k] - self.probs[k - 1]).abs();
        }
        l1 += self.probs[self.probs.len() - 1].abs();
        l1 / 2.0
    }

    /// Exact convolution of the stored supports; tail caps combine so the
    /// result remains a certified upper bound on the dropped part.
    pub fn convolve(&self, other: &DiscreteDist) -> DiscreteDist {
        let mut out = vec![0.0; self.probs.len() + other.probs.len() - 1];
        for (i, &a) in self.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.probs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        let sup_a = (self.probs.len() - 1) as f64;
        let sup_b = (other.probs.len() - 1) as f64;
        let mass = (self.tail_mass + other.tail_mass).min(1.0);
        // E[f(X+Y); bad] <= E[f(X+Y); X oversized] + E[f(X+Y); Y oversized]
        // with X capped by its stored support on the complementary event.
        let m1 = self.tail_m1 + other.tail_m1 + sup_a * other.tail_mass + sup_b * self.tail_mass;
        let m2 = 2.0 * (self.tail_m2 + sup_a * sup_a * other.tail_mass)
            + 2.0 * (other.tail_m2 + sup_b * sup_b * self.tail_mass);
        let m3 = 4.0 * (self.tail_m3 + sup_a * sup_a * sup_a * other.tail_mass)
            + 4.0 * (other.tail_m3 + sup_b * sup_b * sup_b * self.tail_mass);
        DiscreteDist {
            probs: out,
            tail_mass: mass,
            tail_m1: m1,
            tail_m2: m2,
            tail_m3: m3,
        }
    }
}
