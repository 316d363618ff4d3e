//! Brute-force ground truth: exact call expectations of the sum law and
//! the true approximation error the bounds must dominate.

use serde::Serialize;

use crate::dependency::DependencyModel;
use crate::dist::DiscreteDist;
use crate::error::Result;
use crate::nb::{nb_call_expectation, CallQuery, NBParams, SeriesControl};

/// Exact `E[(V - z)^+]` from a materialized pmf, with the certified
/// tail-cap on the dropped part.
pub fn exact_call_expectation(dist: &DiscreteDist, z: f64) -> (f64, f64) {
    dist.call_expectation(z)
}

/// Half-integer grid from 0 to `mean + 6 sd`, covering the kink structure
/// of the call function between integers.
pub fn default_z_grid(dist: &DiscreteDist) -> Vec<f64> {
    let hi = dist.mean() + 6.0 * dist.variance().max(0.0).sqrt();
    let mut grid = Vec::new();
    let mut z = 0.0;
    while z <= hi {
        grid.push(z);
        z += 0.5;
    }
    grid
}

/// One strike of a true-error profile.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleEntry {
    pub z: f64,
    /// Exact call expectation of V over the stored support.
    pub exact: f64,
    /// Certified cap on what the truncated tail of V could add.
    pub exact_err: f64,
    /// NB call expectation.
    pub nb: f64,
    /// Truncation certificate of the NB series.
    pub nb_tail: f64,
    /// `|exact - nb|`.
    pub true_error: f64,
    /// Combined uncertainty of the two evaluations.
    pub error_slop: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub dist_v: DiscreteDist,
    pub params: NBParams,
    pub entries: Vec<OracleEntry>,
}

impl OracleResult {
    pub fn max_true_error(&self) -> f64 {
        self.entries.iter().map(|e| e.true_error).fold(0.0, f64::max)
    }
}

/// Exact error profile `z -> |E[(V - z)^+] - E[(N - z)^+]|` over a grid.
pub fn true_error_profile(
    model: &DependencyModel,
    params: NBParams,
    z_grid: &[f64],
    ctl: SeriesControl,
) -> Result<OracleResult> {
    let dist_v = model.exact_sum_distribution()?;
    let mut entries = Vec::with_capacity(z_grid.len());
    for &z in z_grid {
        let (exact, exact_err) = dist_v.call_expectation(z);
        let nb = nb_call_expectation(params, CallQuery::new(z)?, ctl)?;
        entries.push(OracleEntry {
            z,
            exact,
            exact_err,
            nb: nb.value,
            nb_tail: nb.tail_bound,
            true_error: (exact - nb.value).abs(),
            error_slop: exact_err + nb.tail_bound,
        });
    }
    Ok(OracleResult {
        dist_v,
        params,
        entries,
    })
}
