//! Small numeric helpers shared across modules.

/// Kahan (compensated) accumulator.
///
/// Long alternating series in this crate cancel down many orders of
/// magnitude; compensation keeps the roundoff of the partial sums near
/// one ulp of the running total instead of growing with the term count.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// `base^(-expo) - 1` computed as `expm1(-expo * ln(base))`.
///
/// Envelope right-hand sides of the form `p^{-r} - 1` lose all precision
/// near p = 1 if evaluated naively.
#[inline]
pub fn powm1_neg(base: f64, expo: f64) -> f64 {
    (-expo * base.ln()).exp_m1()
}

/// `base^(-expo)` via the log representation; overflows to `+inf`.
#[inline]
pub fn pow_neg(base: f64, expo: f64) -> f64 {
    (-expo * base.ln()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_compensates_small_terms() {
        let mut s = KahanSum::new();
        s.add(1.0);
        for _ in 0..10_000_000 {
            s.add(1e-16);
        }
        assert!((s.value() - (1.0 + 1e-9)).abs() < 1e-12);
    }

    #[test]
    fn powm1_matches_naive_away_from_one() {
        let a = powm1_neg(0.5, 3.0);
        assert!((a - 7.0).abs() < 1e-12);
    }

    #[test]
    fn powm1_is_accurate_near_one() {
        let p = 1.0 - 1e-12;
        let eps = 1.0 - p;
        let a = powm1_neg(p, 2.0);
        // p^{-2} - 1 = 2 eps + O(eps^2); direct powf subtraction would
        // leave only ~4 correct digits here.
        assert!((a - 2.0 * eps).abs() <= 1e-9 * 2.0 * eps);
    }
}
