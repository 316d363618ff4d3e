//! Built-in benchmark portfolio used by the comparison tables.

use crate::error::{Error, Result};

/// Geometric failure probabilities of the 75-entry benchmark portfolio:
/// ten entries each at 0.05, 0.10, 0.15, 0.20, 0.25, then twenty-five
/// at 0.30.
pub fn benchmark_q_full() -> Vec<f64> {
    let mut q = Vec::with_capacity(75);
    for (count, value) in [
        (10, 0.05),
        (10, 0.10),
        (10, 0.15),
        (10, 0.20),
        (10, 0.25),
        (25, 0.30),
    ] {
        q.extend(std::iter::repeat_n(value, count));
    }
    q
}

/// First `n` entries of the benchmark portfolio, `1 <= n <= 75`.
pub fn benchmark_q(n: usize) -> Result<Vec<f64>> {
    if n == 0 || n > 75 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            reason: "benchmark portfolio holds 75 entries",
        });
    }
    Ok(benchmark_q_full()[..n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn portfolio_layout() {
        let q = benchmark_q_full();
        assert_eq!(q.len(), 75);
        assert_eq!(q[4], 0.05);
        assert_eq!(q[10], 0.10);
        assert_eq!(q[74], 0.30);
        assert_eq!(benchmark_q(20).unwrap().len(), 20);
        assert!(benchmark_q(76).is_err());
        assert!(benchmark_q(0).is_err());
    }
}
