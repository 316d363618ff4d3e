//! Locally dependent collections of non-negative integer variables.
//!
//! Each index `i` carries neighborhoods `i ∈ A_i ⊆ B_i ⊆ J`: the variable
//! is independent of everything outside `A_i`, and its block sum over
//! `A_i` is independent of everything outside `B_i`. The sum `V` of such
//! a collection is the approximation target of the bound engine.
//!
//! Three law representations are supported: a product law (independent
//! coordinates), an explicit joint table over a small support, and a
//! pairwise-Bernoulli description (marginals plus neighborhood pair
//! probabilities) that carries exactly the information the pairwise
//! bounds consume.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dist::DiscreteDist;
use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Enumeration feasibility guard for explicit joint tables.
pub const MAX_TABLE_STATES: u64 = 1 << 24;

/// Conditioning key -> (conditional support of V, accumulated weight).
type GroupedSupport = BTreeMap<(u64, u64, u64), (Vec<(u64, f64)>, f64)>;

#[derive(Debug, Clone)]
pub struct JointTable {
    outcomes: Vec<Vec<u32>>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn entries(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.outcomes
            .iter()
            .map(|o| o.as_slice())
            .zip(self.probs.iter().copied())
    }
}

#[derive(Debug, Clone)]
pub struct PairwiseBernoulli {
    marginals: Vec<f64>,
    /// Off-diagonal joint one-probabilities keyed by `(min(i,j), max(i,j))`.
    pairs: BTreeMap<(usize, usize), f64>,
}

impl PairwiseBernoulli {
    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    /// `P(ζ_i = 1, ζ_j = 1)`; the diagonal is the marginal.
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.marginals[i]
        } else {
            let key = (i.min(j), i.max(j));
            self.pairs.get(&key).copied().unwrap_or(0.0)
        }
    }

    pub fn pairs(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.pairs
    }
}

#[derive(Debug, Clone)]
pub enum Law {
    Product(Vec<DiscreteDist>),
    Table(JointTable),
    Pairwise(PairwiseBernoulli),
}

#[derive(Debug, Clone)]
pub struct DependencyModel {
    a: Vec<Vec<usize>>,
    b: Vec<Vec<usize>>,
    law: Law,
}

fn validate_neighborhoods(n: usize, a: &[Vec<usize>], b: &[Vec<usize>]) -> Result<()> {
    if a.len() != n || b.len() != n {
        return Err(Error::InvalidModel(
            "neighborhood maps must cover every index".into(),
        ));
    }
    for i in 0..n {
        if !a[i].contains(&i) {
            return Err(Error::InvalidModel(format!("index {i} missing from A_{i}")));
        }
        for &j in &a[i] {
            if j >= n {
                return Err(Error::InvalidModel(format!(
                    "A_{i} references out-of-range index {j}"
                )));
            }
            if !b[i].contains(&j) {
                return Err(Error::InvalidModel(format!(
                    "A_{i} must be a subset of B_{i} (index {j} missing)"
                )));
            }
        }
        for &j in &b[i] {
            if j >= n {
                return Err(Error::InvalidModel(format!(
                    "B_{i} references out-of-range index {j}"
                )));
            }
        }
    }
    Ok(())
}

fn sorted_dedup(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

impl DependencyModel {
    /// Independent coordinates; forces `A_i = B_i = {i}`.
    pub fn independent(dists: Vec<DiscreteDist>) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::InvalidModel("empty collection".into()));
        }
        let n = dists.len();
        let singles: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        Ok(Self {
            a: singles.clone(),
            b: singles,
            law: Law::Product(dists),
        })
    }

    /// Explicit joint law over a small support.
    pub fn from_table(
        outcomes: Vec<Vec<u32>>,
        probs: Vec<f64>,
        a: Vec<Vec<usize>>,
        b: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() != probs.len() {
            return Err(Error::InvalidModel(
                "joint table needs matching outcome and probability lists".into(),
            ));
        }
        let states = outcomes.len() as u64;
        if states > MAX_TABLE_STATES {
            return Err(Error::StateSpaceLimit {
                states,
                limit: MAX_TABLE_STATES,
            });
        }
        let n = outcomes[0].len();
        if n == 0 || outcomes.iter().any(|o| o.len() != n) {
            return Err(Error::InvalidModel(
                "every outcome row must have the same positive arity".into(),
            ));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidModel(
                "table probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "table probabilities sum to {total}, not 1 within 1e-12"
            )));
        }
        let a: Vec<_> = a.into_iter().map(sorted_dedup).collect();
        let b: Vec<_> = b.into_iter().map(sorted_dedup).collect();
        validate_neighborhoods(n, &a, &b)?;
        Ok(Self {
            a,
            b,
            law: Law::Table(JointTable { outcomes, probs }),
        })
    }

    /// Bernoulli marginals with pair probabilities on the given
    /// neighborhoods. `B_i` defaults to the closure `∪_{j∈A_i} A_j`.
    pub fn pairwise_bernoulli(
        marginals: Vec<f64>,
        pairs: &[(usize, usize, f64)],
        a: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = marginals.len();
        if n == 0 {
            return Err(Error::InvalidModel("empty collection".into()));
        }
        for (i, &p) in marginals.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter {
                    name: "p_i",
                    value: p,
                    reason: "marginal probabilities must lie in [0, 1]",
                });
            }
            let _ = i;
        }
        let mut map = BTreeMap::new();
        for &(i, j, pij) in pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidModel(format!(
                    "pair ({i}, {j}) is not a valid off-diagonal index pair"
                )));
            }
            let cap = marginals[i].min(marginals[j]);
            if !(0.0..=1.0).contains(&pij) || pij > cap + 1e-15 {
                return Err(Error::InvalidParameter {
                    name: "p_ij",
                    value: pij,
                    reason: "pair probability must lie in [0, min(p_i, p_j)]",
                });
            }
            map.insert((i.min(j), i.max(j)), pij);
        }
        let a: Vec<_> = a.into_iter().map(sorted_dedup).collect();
        // Dependence is symmetric, so a declared pair must sit inside both
        // endpoints' neighborhoods.
        for &(i, j) in map.keys() {
            if i >= a.len() || j >= a.len() || !a[i].contains(&j) || !a[j].contains(&i) {
                return Err(Error::InvalidModel(format!(
                    "pair ({i}, {j}) is declared dependent but not contained in both A_{i} and A_{j}"
                )));
            }
        }
        let b: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut u: Vec<usize> = a
                    .get(i)
                    .map(|ai| ai.iter().flat_map(|&j| a[j].iter().copied()).collect())
                    .unwrap_or_default();
                u.sort_unstable();
                u.dedup();
                u
            })
            .collect();
        validate_neighborhoods(n, &a, &b)?;
        Ok(Self {
            a,
            b,
            law: Law::Pairwise(PairwiseBernoulli {
                marginals,
                pairs: map,
            }),
        })
    }

    pub fn len(&self) -> usize {
        match &self.law {
            Law::Product(d) => d.len(),
            Law::Table(t) => t.outcomes[0].len(),
            Law::Pairwise(pb) => pb.marginals.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn neighborhood_a(&self, i: usize) -> &[usize] {
        &self.a[i]
    }

    pub fn neighborhood_b(&self, i: usize) -> &[usize] {
        &self.b[i]
    }

    /// Exact distribution of `V = Σ ζ_i`: a convolution for product laws,
    /// direct enumeration for tables.
    pub fn exact_sum_distribution(&self) -> Result<DiscreteDist> {
        match &self.law {
            Law::Product(dists) => {
                let mut v = DiscreteDist::point_mass(0);
                for d in dists {
                    v = v.convolve(d);
                }
                Ok(v)
            }
            Law::Table(t) => {
                let entries: Vec<(u64, f64)> = t
                    .entries()
                    .map(|(o, p)| (o.iter().map(|&x| x as u64).sum(), p))
                    .collect();
                DiscreteDist::from_weighted_support(&entries)
            }
            Law::Pairwise(_) => Err(Error::UnsupportedLaw {
                op: "exact_sum_distribution",
                requires: "a product law or an explicit joint table",
            }),
        }
    }

    /// The per-index moment records the bound formulas consume.
    pub fn moments(&self) -> Result<MomentSet> {
        let n = self.len();
        let mut per_index = Vec::with_capacity(n);
        match &self.law {
            Law::Product(dists) => {
                for d in dists {
                    let mean = d.mean();
                    let m2 = d.moment2();
                    per_index.push(IndexMoments {
                        mean,
                        m2,
                        m3: d.moment3(),
                        block_mean: mean,
                        cross: m2,
                        cross_minus_one: m2 - mean,
                    });
                }
                let mean_v = per_index.iter().map(|m| m.mean).sum();
                let var_v = dists.iter().map(|d| d.variance()).sum();
                Ok(MomentSet {
                    per_index,
                    mean_v,
                    var_v,
                })
            }
            Law::Table(t) => {
                for i in 0..n {
                    let mut mean = KahanSum::new();
                    let mut m2 = KahanSum::new();
                    let mut m3 = KahanSum::new();
                    let mut block = KahanSum::new();
                    let mut cross = KahanSum::new();
                    for (o, p) in t.entries() {
                        let xi = o[i] as f64;
                        let xa: f64 = self.a[i].iter().map(|&j| o[j] as f64).sum();
                        mean.add(xi * p);
                        m2.add(xi * xi * p);
                        m3.add(xi * xi * xi * p);
                        block.add(xa * p);
                        cross.add(xi * xa * p);
                    }
                    per_index.push(IndexMoments {
                        mean: mean.value(),
                        m2: m2.value(),
                        m3: m3.value(),
                        block_mean: block.value(),
                        cross: cross.value(),
                        cross_minus_one: cross.value() - mean.value(),
                    });
                }
                let mean_v = per_index.iter().map(|m| m.mean).sum();
                let v = self.exact_sum_distribution()?;
                Ok(MomentSet {
                    per_index,
                    mean_v,
                    var_v: v.variance(),
                })
            }
            Law::Pairwise(pb) => {
                for i in 0..n {
                    let p_i = pb.marginals[i];
                    let block_mean: f64 = self.a[i].iter().map(|&j| pb.marginals[j]).sum();
                    let cross: f64 = self.a[i].iter().map(|&j| pb.pair(i, j)).sum();
                    per_index.push(IndexMoments {
                        mean: p_i,
                        m2: p_i,
                        m3: p_i,
                        block_mean,
                        cross,
                        cross_minus_one: cross - p_i,
                    });
                }
                let mean_v: f64 = pb.marginals.iter().sum();
                // Outside A_i the coordinates are independent, so the
                // covariance reduces to the neighborhood pairs.
                let mut var_v: f64 = pb.marginals.iter().map(|&p| p * (1.0 - p)).sum();
                for i in 0..n {
                    for &j in &self.a[i] {
                        if j != i {
                            var_v += pb.pair(i, j) - pb.marginals[i] * pb.marginals[j];
                        }
                    }
                }
                Ok(MomentSet {
                    per_index,
                    mean_v,
                    var_v,
                })
            }
        }
    }

    /// Conditional unit-shift smoothness of `V`: for each attained value
    /// of the conditioning statistic, the total variation distance between
    /// the conditional law of `V` and its unit shift.
    ///
    /// Requires an explicit joint table.
    pub fn conditional_smoothing(
        &self,
        i: usize,
        cond: Conditioning,
    ) -> Result<Vec<ConditionalShift>> {
        let t = match &self.law {
            Law::Table(t) => t,
            _ => {
                return Err(Error::UnsupportedLaw {
                    op: "conditional_smoothing",
                    requires: "an explicit joint table",
                })
            }
        };
        let mut groups: BTreeMap<(u64, u64, u64), Vec<(u64, f64)>> = BTreeMap::new();
        for (o, p) in t.entries() {
            let xi = o[i] as u64;
            let xa: u64 = self.a[i].iter().map(|&j| o[j] as u64).sum();
            let xb: u64 = self.b[i].iter().map(|&j| o[j] as u64).sum();
            let v: u64 = o.iter().map(|&x| x as u64).sum();
            let key = match cond {
                Conditioning::BlockSums => (0, xa, xb),
                Conditioning::SelfAndBlockSums => (xi, xa, xb),
                Conditioning::OuterSum => (0, 0, xb),
            };
            groups.entry(key).or_default().push((v, p));
        }
        let mut out = Vec::with_capacity(groups.len());
        for ((xi, xa, xb), support) in groups {
            let mass: f64 = support.iter().map(|&(_, p)| p).sum();
            if mass <= 0.0 {
                continue;
            }
            let max_v = support.iter().map(|&(v, _)| v).max().unwrap_or(0);
            let mut pmf = vec![0.0; max_v as usize + 1];
            for &(v, p) in &support {
                pmf[v as usize] += p / mass;
            }
            let mut l1 = pmf[0].abs();
            for k in 1..pmf.len() {
                l1 += (pmf[k] - pmf[k - 1]).abs();
            }
            l1 += pmf[pmf.len() - 1].abs();
            out.push(ConditionalShift {
                key: match cond {
                    Conditioning::BlockSums => vec![xa, xb],
                    Conditioning::SelfAndBlockSums => vec![xi, xa, xb],
                    Conditioning::OuterSum => vec![xb],
                },
                mass,
                d_tv: l1 / 2.0,
            });
        }
        Ok(out)
    }

    /// The four weighted smoothing expectations consumed by the
    /// variance-matched locally dependent bound. Each combines a weight
    /// in `(ζ_i, ζ_{A_i}, ζ_{B_i})` with `D(V | conditioning) =
    /// 2 d_TV(V, V+1 | conditioning)`.
    pub fn smoothing_terms(&self) -> Result<Vec<SmoothingTerms>> {
        match &self.law {
            Law::Table(t) => {
                let n = self.len();
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let pair = self.grouped_expectation(t, i, Conditioning::BlockSums, |_, xa, xb| {
                        xa * (2.0 * xb - xa - 1.0)
                    })?;
                    let self_pair =
                        self.grouped_expectation(t, i, Conditioning::SelfAndBlockSums, |xi, xa, xb| {
                            xi * xa * (2.0 * xb - xa - 1.0)
                        })?;
                    let outer =
                        self.grouped_expectation(t, i, Conditioning::OuterSum, |_, _, xb| xb)?;
                    let residual =
                        self.grouped_expectation(t, i, Conditioning::SelfAndBlockSums, |xi, xa, xb| {
                            xi * (xa - 1.0) * (2.0 * xb - xa - 2.0)
                        })?;
                    out.push(SmoothingTerms {
                        block_pair: pair,
                        self_block: self_pair,
                        outer,
                        residual,
                    });
                }
                Ok(out)
            }
            Law::Product(dists) => {
                // A_i = B_i = {i}: conditioning on ζ_i shifts the rest of
                // the sum, so D(V | ζ_i) is the unit-shift smoothness of
                // the leave-one-out sum, independent of the value.
                let n = dists.len();
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let mut rest = DiscreteDist::point_mass(0);
                    for (j, d) in dists.iter().enumerate() {
                        if j != i {
                            rest = rest.convolve(d);
                        }
                    }
                    let d_value = 2.0 * rest.dtv_unit_shift();
                    let mean = dists[i].mean();
                    let m2 = dists[i].moment2();
                    let m3 = dists[i].moment3();
                    out.push(SmoothingTerms {
                        block_pair: (m2 - mean) * d_value,
                        self_block: (m3 - m2) * d_value,
                        outer: mean * d_value,
                        residual: (m3 - 3.0 * m2 + 2.0 * mean) * d_value,
                    });
                }
                Ok(out)
            }
            Law::Pairwise(_) => Err(Error::UnsupportedLaw {
                op: "smoothing_terms",
                requires: "a product law or an explicit joint table",
            }),
        }
    }

    fn grouped_expectation(
        &self,
        t: &JointTable,
        i: usize,
        cond: Conditioning,
        weight: fn(f64, f64, f64) -> f64,
    ) -> Result<f64> {
        // E[w(ζ_i, ζ_A, ζ_B) D(V | conditioning)]: the weight is constant
        // on every conditioning class, so group, measure the conditional
        // shift, and recombine.
        let mut groups: GroupedSupport = BTreeMap::new();
        for (o, p) in t.entries() {
            let xi = o[i] as u64;
            let xa: u64 = self.a[i].iter().map(|&j| o[j] as u64).sum();
            let xb: u64 = self.b[i].iter().map(|&j| o[j] as u64).sum();
            let v: u64 = o.iter().map(|&x| x as u64).sum();
            let key = match cond {
                Conditioning::BlockSums => (0, xa, xb),
                Conditioning::SelfAndBlockSums => (xi, xa, xb),
                Conditioning::OuterSum => (0, 0, xb),
            };
            let entry = groups.entry(key).or_insert_with(|| (Vec::new(), 0.0));
            entry.0.push((v, p));
            entry.1 += weight(xi as f64, xa as f64, xb as f64) * p;
        }
        let mut total = KahanSum::new();
        for ((_, _, _), (support, weighted_mass)) in groups {
            let mass: f64 = support.iter().map(|&(_, p)| p).sum();
            if mass <= 0.0 {
                continue;
            }
            let max_v = support.iter().map(|&(v, _)| v).max().unwrap_or(0);
            let mut pmf = vec![0.0; max_v as usize + 1];
            for &(v, p) in &support {
                pmf[v as usize] += p / mass;
            }
            let mut l1 = pmf[0].abs();
            for k in 1..pmf.len() {
                l1 += (pmf[k] - pmf[k - 1]).abs();
            }
            l1 += pmf[pmf.len() - 1].abs();
            let d_value = l1; // 2 * d_TV
            total.add(weighted_mass * d_value);
        }
        Ok(total.value())
    }

    /// Seeded forward sampler for the empirical law of `V`.
    ///
    /// Deterministic given `(seed, n_paths, workers)`: each worker derives
    /// its own stream from the seed and owns a fixed contiguous slice of
    /// the path budget.
    pub fn sample(&self, n_paths: u64, seed: u64, workers: usize) -> Result<EmpiricalDist> {
        if n_paths == 0 || workers == 0 {
            return Err(Error::InvalidModel(
                "sampling needs at least one path and one worker".into(),
            ));
        }
        let sampler = PathSampler::build(self)?;
        let mut counts: Vec<u64> = Vec::new();
        let chunk = n_paths / workers as u64;
        let remainder = n_paths % workers as u64;
        for w in 0..workers as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w);
            let budget = chunk + u64::from(w < remainder);
            for _ in 0..budget {
                let v = sampler.draw(&mut rng) as usize;
                if counts.len() <= v {
                    counts.resize(v + 1, 0);
                }
                counts[v] += 1;
            }
        }
        Ok(EmpiricalDist { counts, n_paths })
    }
}

/// Conditioning statistic for [`DependencyModel::conditional_smoothing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Condition on `(ζ_{A_i}, ζ_{B_i})`.
    BlockSums,
    /// Condition on `(ζ_i, ζ_{A_i}, ζ_{B_i})`.
    SelfAndBlockSums,
    /// Condition on `ζ_{B_i}` alone.
    OuterSum,
}

/// One conditioning class with its probability mass and the total
/// variation distance between the conditional law of `V` and `V + 1`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionalShift {
    pub key: Vec<u64>,
    pub mass: f64,
    pub d_tv: f64,
}

/// Per-index moments of the collection.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IndexMoments {
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    /// `E(ζ_{A_i})`
    pub block_mean: f64,
    /// `E(ζ_i ζ_{A_i})`
    pub cross: f64,
    /// `E(ζ_i (ζ_{A_i} - 1))`
    pub cross_minus_one: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentSet {
    pub per_index: Vec<IndexMoments>,
    pub mean_v: f64,
    pub var_v: f64,
}

/// The four smoothing expectations of the variance-matched locally
/// dependent bound, already multiplied by `D(V | ·)` inside the
/// expectation but not yet by the outer `p`, `q` or moment weights.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SmoothingTerms {
    /// `E[ζ_A (2ζ_B - ζ_A - 1) D(V | ζ_A, ζ_B)]`
    pub block_pair: f64,
    /// `E[ζ_i ζ_A (2ζ_B - ζ_A - 1) D(V | ζ_i, ζ_A, ζ_B)]`
    pub self_block: f64,
    /// `E[ζ_B D(V | ζ_B)]`
    pub outer: f64,
    /// `E[ζ_i (ζ_A - 1)(2ζ_B - ζ_A - 2) D(V | ζ_i, ζ_A, ζ_B)]`
    pub residual: f64,
}

/// Empirical pmf with per-point binomial standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalDist {
    pub counts: Vec<u64>,
    pub n_paths: u64,
}

impl EmpiricalDist {
    pub fn pmf(&self, k: usize) -> f64 {
        self.counts.get(k).map_or(0.0, |&c| c as f64 / self.n_paths as f64)
    }

    pub fn std_error(&self, k: usize) -> f64 {
        let p = self.pmf(k);
        (p * (1.0 - p) / self.n_paths as f64).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &c)| k as f64 * c as f64)
            .sum::<f64>()
            / self.n_paths as f64
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

enum PathSampler {
    Product(Vec<Vec<f64>>),
    Table { cum: Vec<f64>, sums: Vec<u64> },
    Shock(ShockSampler),
}

/// One-dependent common-shock realization of a pairwise-Bernoulli spec:
/// `ξ_i = max(Y_i, max_{e ∋ i} Z_e)` with an independent shock `Z_e` per
/// neighborhood pair `e = {i, j}`. Solving the two-point marginals gives
/// `1 - z_e = (1-p_i)(1-p_j)/(1 - p_i - p_j + p_ij)` and
/// `1 - y_i = (1-p_i)/Π_{e∋i}(1-z_e)`; both must land in [0, 1], which
/// requires non-negatively correlated, Fréchet-feasible pairs.
struct ShockSampler {
    idio: Vec<f64>,
    shocks: Vec<((usize, usize), f64)>,
}

impl PathSampler {
    fn build(model: &DependencyModel) -> Result<Self> {
        match &model.law {
            Law::Product(dists) => {
                let cums = dists
                    .iter()
                    .map(|d| {
                        let mut acc = 0.0;
                        d.probs()
                            .iter()
                            .map(|&p| {
                                acc += p;
                                acc
                            })
                            .collect()
                    })
                    .collect();
                Ok(PathSampler::Product(cums))
            }
            Law::Table(t) => {
                let mut acc = 0.0;
                let cum = t
                    .probs
                    .iter()
                    .map(|&p| {
                        acc += p;
                        acc
                    })
                    .collect();
                let sums = t
                    .outcomes
                    .iter()
                    .map(|o| o.iter().map(|&x| x as u64).sum())
                    .collect();
                Ok(PathSampler::Table { cum, sums })
            }
            Law::Pairwise(pb) => {
                let n = pb.marginals.len();
                let mut shocks = Vec::new();
                for (&(i, j), &p_ij) in pb.pairs() {
                    let (p_i, p_j) = (pb.marginals[i], pb.marginals[j]);
                    let both_zero = 1.0 - p_i - p_j + p_ij;
                    if both_zero <= 0.0 {
                        return Err(Error::ShockConstruction(format!(
                            "pair ({i}, {j}) leaves no mass on the all-zero corner"
                        )));
                    }
                    let survive = (1.0 - p_i) * (1.0 - p_j) / both_zero;
                    let z = 1.0 - survive;
                    if !(-1e-12..=1.0).contains(&z) {
                        return Err(Error::ShockConstruction(format!(
                            "pair ({i}, {j}) requires shock probability {z} outside [0, 1]; \
                             the construction needs p_ij >= p_i p_j"
                        )));
                    }
                    shocks.push(((i, j), z.max(0.0)));
                }
                let mut idio = Vec::with_capacity(n);
                for i in 0..n {
                    let mut survive_shocks = 1.0;
                    for &((a, b), z) in &shocks {
                        if a == i || b == i {
                            survive_shocks *= 1.0 - z;
                        }
                    }
                    let y = 1.0 - (1.0 - pb.marginals[i]) / survive_shocks;
                    if !(-1e-12..=1.0).contains(&y) {
                        return Err(Error::ShockConstruction(format!(
                            "index {i}: neighborhood shocks already exceed the marginal {}",
                            pb.marginals[i]
                        )));
                    }
                    idio.push(y.max(0.0));
                }
                Ok(PathSampler::Shock(ShockSampler { idio, shocks }))
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            PathSampler::Product(cums) => {
                let mut v = 0u64;
                for cum in cums {
                    let u: f64 = rng.gen();
                    let idx = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                    v += idx as u64;
                }
                v
            }
            PathSampler::Table { cum, sums } => {
                let u: f64 = rng.gen();
                let idx = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                sums[idx]
            }
            PathSampler::Shock(s) => {
                let mut hit = vec![false; s.idio.len()];
                for (i, &y) in s.idio.iter().enumerate() {
                    if rng.gen::<f64>() < y {
                        hit[i] = true;
                    }
                }
                for &((a, b), z) in &s.shocks {
                    if rng.gen::<f64>() < z {
                        hit[a] = true;
                        hit[b] = true;
                    }
                }
                hit.iter().filter(|&&h| h).count() as u64
            }
        }
    }
}
