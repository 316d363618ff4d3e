//! Error bounds on `|E[(V - z)^+] - E[(N_{r,p} - z)^+]|`.
//!
//! Every bound is a product of a difference-envelope prefactor (the
//! uniform `2 p^{-(r+1)} - p^{-1}` or, for z > 1, the crude z-dependent
//! envelope) with a structural term assembled from moments of the
//! collection. Mean matching fixes `p` from a chosen `r`; mean/variance
//! matching fixes both and requires over-dispersion.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dependency::{DependencyModel, Law};
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};
use crate::nb::{match_mean, match_mean_var, CallQuery, NBParams};
use crate::numeric::KahanSum;
use crate::stein::{crude_delta_envelope, uniform_delta_envelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MatchingMode {
    MeanGivenR,
    MeanAndVariance,
    Explicit,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

/// A fully assembled bound with its ingredients kept visible.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub matched_params: NBParams,
    pub matching_mode: MatchingMode,
    /// Strike for non-uniform reports; `None` marks a z-independent bound.
    pub z: Option<f64>,
    pub prefactor: f64,
    pub structural_term: f64,
    /// Certified cap on the truncation error inside the structural term.
    pub structural_certificate: f64,
    pub bound_value: f64,
    pub comparison: Vec<NamedValue>,
    pub true_error: Option<f64>,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn assemble(
        bound_name: &str,
        params: NBParams,
        mode: MatchingMode,
        z: Option<f64>,
        structural: f64,
        certificate: f64,
    ) -> Result<Self> {
        let uniform = uniform_delta_envelope(params);
        let (prefactor, comparison) = match z {
            None => (uniform, Vec::new()),
            Some(zv) => {
                let crude = crude_delta_envelope(params, CallQuery::new(zv)?)?;
                (
                    crude,
                    vec![NamedValue {
                        name: "uniform-prefactor-bound".into(),
                        value: uniform * structural,
                    }],
                )
            }
        };
        Ok(Self {
            bound_name: bound_name.into(),
            matched_params: params,
            matching_mode: mode,
            z,
            prefactor,
            structural_term: structural,
            structural_certificate: certificate,
            bound_value: prefactor * structural,
            comparison,
            true_error: None,
            notes: Vec::new(),
        })
    }

    pub fn with_true_error(mut self, err: f64) -> Self {
        self.true_error = Some(err);
        self
    }

    pub fn push_comparison(&mut self, name: &str, value: f64) {
        self.comparison.push(NamedValue {
            name: name.into(),
            value,
        });
    }
}

/// Mean-matched bound for a locally dependent collection:
/// structural term `Σ_i [p E(ζ_i) E(ζ_A) + q E(ζ_i ζ_A) + E(ζ_i(ζ_A - 1))]`.
///
/// `z = None` gives the uniform (sup over z) bound; `z = Some(value)` with
/// value > 1 applies the crude z-dependent envelope instead.
pub fn locally_dependent_mean_bound(
    model: &DependencyModel,
    r: f64,
    z: Option<f64>,
) -> Result<BoundReport> {
    let ms = model.moments()?;
    let params = match_mean(ms.mean_v, r)?;
    params.require_dispersion_above_one()?;
    let (p, q) = (params.p(), params.q());
    let mut structural = KahanSum::new();
    for im in &ms.per_index {
        structural.add(p * im.mean * im.block_mean + q * im.cross + im.cross_minus_one);
    }
    let certificate = product_moment_slop(model, p, q);
    BoundReport::assemble(
        "locally-dependent-mean",
        params,
        MatchingMode::MeanGivenR,
        z,
        structural.value(),
        certificate,
    )
}

/// Variance-matched bound for a locally dependent collection; assembles
/// the four conditional-smoothing expectations.
pub fn locally_dependent_meanvar_bound(
    model: &DependencyModel,
    z: Option<f64>,
) -> Result<BoundReport> {
    let ms = model.moments()?;
    if ms.var_v <= ms.mean_v {
        return Err(Error::Infeasible(format!(
            "variance matching requires Var(V) > E(V) (got E = {}, Var = {})",
            ms.mean_v, ms.var_v
        )));
    }
    let params = match_mean_var(ms.mean_v, ms.var_v)?;
    params.require_dispersion_above_one()?;
    let (p, q) = (params.p(), params.q());
    let terms = model.smoothing_terms()?;
    let mut structural = KahanSum::new();
    for (im, t) in ms.per_index.iter().zip(&terms) {
        structural.add(p * im.mean * t.block_pair);
        structural.add(q * t.self_block);
        let weight = (p * im.mean * im.block_mean + q * im.cross - im.cross_minus_one).abs();
        structural.add(weight * t.outer);
        structural.add(t.residual);
    }
    let mut report = BoundReport::assemble(
        "locally-dependent-meanvar",
        params,
        MatchingMode::MeanAndVariance,
        z,
        structural.value(),
        product_moment_slop(model, p, q),
    )?;
    let n = model.len();
    if matches!(model.law(), Law::Table(_))
        && (0..n).any(|i| model.neighborhood_b(i).len() == n)
    {
        report.notes.push(
            "some B_i covers every index: conditioning determines V and the bound degenerates"
                .into(),
        );
    }
    Ok(report)
}

/// Coarse certified slop for structural terms computed from truncated
/// per-index supports; exact-law models contribute nothing.
fn product_moment_slop(model: &DependencyModel, p: f64, q: f64) -> f64 {
    match model.law() {
        Law::Product(dists) => dists
            .iter()
            .map(|d| {
                (2.0 * d.mean() + p) * d.tail_m1() + (1.0 + q) * d.tail_m2() + d.tail_m1()
            })
            .sum(),
        _ => 0.0,
    }
}

/// Mean-matched bound for Bernoulli marginals with neighborhood pair
/// probabilities: structural term
/// `Σ_i [(1+q) Σ_{j∈A_i} p_ij + p_i (p Σ_{j∈A_i} p_j - 1)]`
/// with `p_ii = p_i`. A negative total (vacuous bound) clamps to zero
/// with a note; individual summands are summed without clamping.
pub fn pairwise_bernoulli_bound(
    marginals: &[f64],
    pairs: &[(usize, usize, f64)],
    neighborhoods: &[Vec<usize>],
    r: f64,
) -> Result<BoundReport> {
    let model =
        DependencyModel::pairwise_bernoulli(marginals.to_vec(), pairs, neighborhoods.to_vec())?;
    let ms = model.moments()?;
    let params = match_mean(ms.mean_v, r)?;
    params.require_dispersion_above_one()?;
    let (p, q) = (params.p(), params.q());
    let mut structural = KahanSum::new();
    for im in &ms.per_index {
        structural.add((1.0 + q) * im.cross + im.mean * (p * im.block_mean - 1.0));
    }
    let mut value = structural.value();
    let mut notes = Vec::new();
    if value < 0.0 {
        notes.push(format!(
            "structural total {value:e} is negative; clamped to 0 (bound is vacuous)"
        ));
        value = 0.0;
    }
    let mut report = BoundReport::assemble(
        "pairwise-bernoulli",
        params,
        MatchingMode::MeanGivenR,
        None,
        value,
        0.0,
    )?;
    report.notes = notes;
    Ok(report)
}

/// Mean-matched bound for a sum of independent variables given by their
/// per-index distributions: structural term
/// `Σ_i Σ_{k>=1} k |(p E(ζ_i) + qk) γ_{i,k} - (k+1) γ_{i,k+1}|`.
pub fn independent_mean_bound(
    dists: &[DiscreteDist],
    r: f64,
    z: Option<f64>,
) -> Result<BoundReport> {
    if dists.is_empty() {
        return Err(Error::InvalidModel("empty collection".into()));
    }
    let mu_v: f64 = dists.iter().map(|d| d.mean()).sum();
    let params = match_mean(mu_v, r)?;
    params.require_dispersion_above_one()?;
    let (p, q) = (params.p(), params.q());
    let mut structural = KahanSum::new();
    let mut certificate = 0.0;
    for d in dists {
        let mu = d.mean();
        let probs = d.probs();
        for k in 1..probs.len() {
            let kf = k as f64;
            let g_k = probs[k];
            let g_k1 = probs.get(k + 1).copied().unwrap_or(0.0);
            structural.add(kf * ((p * mu + q * kf) * g_k - (kf + 1.0) * g_k1).abs());
        }
        // Dropped tail: mass beyond the stored support enters both the
        // γ_k and γ_{k+1} slots of the summand.
        certificate +=
            p * mu * d.tail_m1() + (q + 2.0) * d.tail_m2() + p * d.tail_m1() * (1.0 + mu);
    }
    BoundReport::assemble(
        "independent-mean",
        params,
        MatchingMode::MeanGivenR,
        z,
        structural.value(),
        certificate,
    )
}

/// Variance-matched bound for a sum of independent variables. The
/// smoothing factor is `sqrt(2/π) (1/4 + Σ δ_j - δ*)^{-1/2}` with
/// `δ_j = min(1/2, 1 - d_TV(ζ_j, ζ_j + 1))` and `δ* = max δ_j`.
pub fn independent_meanvar_bound(dists: &[DiscreteDist], z: Option<f64>) -> Result<BoundReport> {
    if dists.is_empty() {
        return Err(Error::InvalidModel("empty collection".into()));
    }
    let mu_v: f64 = dists.iter().map(|d| d.mean()).sum();
    let var_v: f64 = dists.iter().map(|d| d.variance()).sum();
    if var_v <= mu_v {
        return Err(Error::Infeasible(format!(
            "variance matching requires Var(V) > E(V) (got E = {mu_v}, Var = {var_v})"
        )));
    }
    let params = match_mean_var(mu_v, var_v)?;
    params.require_dispersion_above_one()?;
    let (p, q) = (params.p(), params.q());

    let deltas: Vec<f64> = dists
        .iter()
        .map(|d| (1.0 - d.dtv_unit_shift()).min(0.5))
        .collect();
    let delta_star = deltas.iter().cloned().fold(f64::MIN, f64::max);
    let factor = (2.0 / std::f64::consts::PI).sqrt()
        / (0.25 + deltas.iter().sum::<f64>() - delta_star).sqrt();

    let mut structural = KahanSum::new();
    let mut certificate = 0.0;
    for d in dists {
        let mu = d.mean();
        let m2 = d.moment2();
        structural.add(mu * (p * mu * mu + q * m2 - (m2 - mu)).abs());
        let probs = d.probs();
        for k in 2..probs.len() {
            let kf = k as f64;
            let g_k = probs[k];
            let g_k1 = probs.get(k + 1).copied().unwrap_or(0.0);
            structural
                .add(kf * (kf - 1.0) / 2.0 * ((p * mu + q * kf) * g_k - (kf + 1.0) * g_k1).abs());
        }
        certificate += 0.5 * p * mu * d.tail_m2()
            + 0.5 * q * d.tail_m3()
            + 1.5 * d.tail_m3()
            + (1.0 + 2.0 * mu + m2) * (d.tail_m1() + d.tail_m2());
    }
    BoundReport::assemble(
        "independent-meanvar",
        params,
        MatchingMode::MeanAndVariance,
        z,
        factor * structural.value(),
        factor * certificate,
    )
}

/// Closed-form mean-matched bound for independent Bernoulli marginals:
/// `(2 p^{-(r+1)} - p^{-1}) Σ p_i (1 - p q_i)` with `p = r/(r + Σ p_i)`.
pub fn bernoulli_nb_bound(marginals: &[f64], r: f64) -> Result<f64> {
    validate_probabilities(marginals, "p_i")?;
    let mu: f64 = marginals.iter().sum();
    let params = match_mean(mu, r)?;
    params.require_dispersion_above_one()?;
    let p = params.p();
    let sum: f64 = marginals.iter().map(|&pi| pi * (1.0 - p * (1.0 - pi))).sum();
    Ok(uniform_delta_envelope(params) * sum)
}

/// Poisson comparison for independent Bernoulli marginals:
/// `(2 e^λ - 1) Σ p_i²`, `λ = Σ p_i`.
pub fn bernoulli_poisson_bound(marginals: &[f64]) -> f64 {
    let lambda: f64 = marginals.iter().sum();
    let s: f64 = marginals.iter().map(|&p| p * p).sum();
    (2.0 * lambda.exp() - 1.0) * s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GeometricMatching {
    Mean,
    MeanVar,
}

/// Closed-form geometric bound, with the matched parameters and the
/// smoothing-constant variant kept side by side.
#[derive(Debug, Clone, Serialize)]
pub struct GeometricBound {
    pub params: NBParams,
    pub mode: GeometricMatching,
    pub value: f64,
    /// Variance-matched value recomputed with the per-index smoothing
    /// constant `sqrt(2/π)(1/4 + Σ δ_j - δ*)^{-1/2}`, `δ_j = min(1/2, q_j)`,
    /// in place of the aggregate `sqrt(2/π)(Σ q_j - 1/4)^{-1/2}` used by
    /// `value`. The two coincide only when δ* = 1/2, so both are kept.
    pub general_constant_value: Option<f64>,
    pub notes: Vec<String>,
}

/// Mean- or variance-matched bound for independent geometric variables
/// with `P(ζ_i = k) = q_i^k p_i`.
///
/// Mean mode fixes `r = n` unless overridden. Variance mode requires
/// `Σ q_i > 1/4`. Failure probabilities above 1/2 produce a note, or an
/// error when `strict` is set.
pub fn geometric_nb_bound(
    q: &[f64],
    mode: GeometricMatching,
    r_override: Option<f64>,
    strict: bool,
) -> Result<GeometricBound> {
    if q.is_empty() {
        return Err(Error::InvalidModel("empty collection".into()));
    }
    let mut notes = Vec::new();
    for &qi in q {
        if !(qi > 0.0 && qi < 1.0) {
            return Err(Error::InvalidParameter {
                name: "q_i",
                value: qi,
                reason: "geometric failure probabilities must lie in (0, 1)",
            });
        }
        if qi > 0.5 {
            if strict {
                return Err(Error::Precondition(format!(
                    "geometric bound is stated for q_i <= 1/2 (got {qi})"
                )));
            }
            notes.push(format!("q_i = {qi} exceeds 1/2; bound is outside its stated domain"));
        }
    }
    let n = q.len() as f64;
    let mu: f64 = q.iter().map(|&qi| qi / (1.0 - qi)).sum();
    match mode {
        GeometricMatching::Mean => {
            let r = r_override.unwrap_or(n);
            let params = match_mean(mu, r)?;
            params.require_dispersion_above_one()?;
            let p = params.p();
            let s: f64 = q
                .iter()
                .map(|&qi| {
                    let pi = 1.0 - qi;
                    (p - pi).abs() * qi / (pi * pi)
                })
                .sum();
            Ok(GeometricBound {
                params,
                mode,
                value: uniform_delta_envelope(params) * s,
                general_constant_value: None,
                notes,
            })
        }
        GeometricMatching::MeanVar => {
            if let Some(r) = r_override {
                notes.push(format!(
                    "r override {r} ignored: variance matching determines both parameters"
                ));
            }
            let q_total: f64 = q.iter().sum();
            if q_total <= 0.25 {
                return Err(Error::Infeasible(format!(
                    "variance-matched geometric bound requires Σ q_i > 1/4 (got {q_total})"
                )));
            }
            let var: f64 = q.iter().map(|&qi| qi / ((1.0 - qi) * (1.0 - qi))).sum();
            let params = match_mean_var(mu, var)?;
            params.require_dispersion_above_one()?;
            let p = params.p();
            let s: f64 = q
                .iter()
                .map(|&qi| {
                    let pi = 1.0 - qi;
                    (p - pi).abs() * qi * qi / (pi * pi * pi)
                })
                .sum();
            let root_2_pi = (2.0 / std::f64::consts::PI).sqrt();
            let aggregate = 3.0 * uniform_delta_envelope(params) * root_2_pi
                / (q_total - 0.25).sqrt()
                * s;
            // d_TV(geometric, geometric + 1) = p_j, so δ_j = min(1/2, q_j).
            let deltas: Vec<f64> = q.iter().map(|&qi| qi.min(0.5)).collect();
            let delta_star = deltas.iter().cloned().fold(f64::MIN, f64::max);
            let general = 3.0 * uniform_delta_envelope(params) * root_2_pi
                / (0.25 + deltas.iter().sum::<f64>() - delta_star).sqrt()
                * s;
            Ok(GeometricBound {
                params,
                mode,
                value: aggregate,
                general_constant_value: Some(general),
                notes,
            })
        }
    }
}

/// Poisson comparison for independent geometric variables:
/// `(2 e^λ - 1) Σ (8 - 7 p_i) q_i² / p_i³`, `λ = Σ q_i / p_i`.
pub fn geometric_poisson_bound(q: &[f64]) -> Result<f64> {
    for &qi in q {
        if !(0.0..1.0).contains(&qi) {
            return Err(Error::InvalidParameter {
                name: "q_i",
                value: qi,
                reason: "geometric failure probabilities must lie in [0, 1)",
            });
        }
    }
    let lambda: f64 = q.iter().map(|&qi| qi / (1.0 - qi)).sum();
    let s: f64 = q
        .iter()
        .map(|&qi| {
            let pi = 1.0 - qi;
            (8.0 - 7.0 * pi) * qi * qi / (pi * pi * pi)
        })
        .sum();
    Ok((2.0 * lambda.exp() - 1.0) * s)
}

/// Poisson comparison for the locally dependent Bernoulli setup:
/// `(2 e^λ - 1) Σ_i [Σ_{j∈A_i\{i}} p_ij + Σ_{j∈A_i} p_i p_j]`, `λ = Σ p_i`.
pub fn pairwise_poisson_bound(
    marginals: &[f64],
    pairs: &[(usize, usize, f64)],
    neighborhoods: &[Vec<usize>],
) -> Result<f64> {
    validate_probabilities(marginals, "p_i")?;
    let mut map = BTreeMap::new();
    for &(i, j, pij) in pairs {
        if i >= marginals.len() || j >= marginals.len() {
            return Err(Error::InvalidModel(format!("pair ({i}, {j}) out of range")));
        }
        map.insert((i.min(j), i.max(j)), pij);
    }
    let lambda: f64 = marginals.iter().sum();
    let mut s = KahanSum::new();
    for (i, ai) in neighborhoods.iter().enumerate() {
        for &j in ai {
            if j != i {
                s.add(map.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0));
            }
            s.add(marginals[i] * marginals[j]);
        }
    }
    Ok((2.0 * lambda.exp() - 1.0) * s.value())
}

fn validate_probabilities(values: &[f64], name: &'static str) -> Result<()> {
    for &v in values {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "probabilities must lie in [0, 1]",
            });
        }
    }
    Ok(())
}
