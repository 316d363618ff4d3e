//! Seeded verification suites behind `nbcall verify`.

use nbcall_core::bounds::{
    bernoulli_nb_bound, geometric_nb_bound, independent_mean_bound, pairwise_bernoulli_bound,
    GeometricMatching,
};
use nbcall_core::dependency::DependencyModel;
use nbcall_core::dist::DiscreteDist;
use nbcall_core::nb::{
    nb_call_expectation, nb_pmf, verify_call_expectation_envelopes, CallQuery, NBParams,
    SeriesControl,
};
use nbcall_core::oracle::{default_z_grid, true_error_profile};
use nbcall_core::stein::{
    crude_delta_envelope, piecewise_delta_envelope, solve, uniform_delta_envelope,
    uniform_solution_envelope, verify_series_inequalities,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct FailureRecord {
    pub suite: &'static str,
    pub case: String,
    pub detail: String,
}

pub struct SuiteOutcome {
    pub cases: usize,
    pub failures: Vec<FailureRecord>,
}

fn ctl() -> SeriesControl {
    SeriesControl::default()
}

/// Residual identity and every magnitude envelope of the Stein solution.
pub fn lemmas(seed: u64, budget: usize) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..budget {
        let r = rng.gen_range(1.01..30.0);
        let p = rng.gen_range(0.3..0.98);
        let prm = NBParams::new(r, p).unwrap();
        let mean = r * (1.0 - p) / p;
        let z = match case % 4 {
            0 => 0.0,
            1 => rng.gen_range(0..=(3.0 * mean) as u64 + 1) as f64,
            _ => rng.gen_range(0.0..3.0 * mean),
        };
        let k: u64 = rng.gen_range(0..61);
        let tag = format!("r={r:.4} p={p:.4} z={z:.4} k={k}");

        let strike = CallQuery::new(z).unwrap();
        let expect = match nb_call_expectation(prm, strike, ctl()) {
            Ok(s) => s.value,
            Err(e) => {
                failures.push(FailureRecord {
                    suite: "lemmas",
                    case: tag,
                    detail: format!("call expectation failed: {e}"),
                });
                continue;
            }
        };
        let g_k = solve(prm, strike, k, ctl()).unwrap().value;
        let g_k1 = solve(prm, strike, k + 1, ctl()).unwrap().value;

        let lhs = prm.q() * (r + k as f64) * g_k1 - k as f64 * g_k;
        let rhs = (k as f64 - z).max(0.0) - expect;
        let env_g = uniform_solution_envelope(prm);
        let scale = 1.0_f64.max((prm.q() * (r + k as f64) + k as f64) * env_g);
        if (lhs - rhs).abs() > 1e-9 * scale {
            failures.push(FailureRecord {
                suite: "lemmas",
                case: tag.clone(),
                detail: format!("residual {:e} above 1e-9 * {scale:e}", (lhs - rhs).abs()),
            });
        }

        if g_k.abs() > env_g * (1.0 + 1e-9) {
            failures.push(FailureRecord {
                suite: "lemmas",
                case: tag.clone(),
                detail: format!("|g({k})| = {:e} above uniform envelope {env_g:e}", g_k.abs()),
            });
        }
        let delta = g_k1 - g_k;
        let env_d = uniform_delta_envelope(prm);
        if delta.abs() > env_d * (1.0 + 1e-9) {
            failures.push(FailureRecord {
                suite: "lemmas",
                case: tag.clone(),
                detail: format!("|Δg({k})| = {:e} above uniform envelope {env_d:e}", delta.abs()),
            });
        }
        if z > 1.0 && k >= 1 {
            let (env_piece, branch) = piecewise_delta_envelope(prm, strike, k).unwrap();
            if delta.abs() > env_piece + 1e-9 * env_piece.max(1.0) {
                failures.push(FailureRecord {
                    suite: "lemmas",
                    case: tag.clone(),
                    detail: format!(
                        "|Δg({k})| = {:e} above {branch:?} envelope {env_piece:e}",
                        delta.abs()
                    ),
                });
            }
            let crude = crude_delta_envelope(prm, strike).unwrap();
            if crude < env_piece * (1.0 - 1e-12) {
                failures.push(FailureRecord {
                    suite: "lemmas",
                    case: tag,
                    detail: format!("crude envelope {crude:e} below branch {env_piece:e}"),
                });
            }
        }
    }
    SuiteOutcome {
        cases: budget,
        failures,
    }
}

/// Closed-form expectation envelopes and the five series inequalities.
pub fn appendix(seed: u64, budget: usize) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for _ in 0..budget {
        let r = rng.gen_range(1.01..20.0);
        let p = rng.gen_range(0.3..0.97);
        let prm = NBParams::new(r, p).unwrap();
        let mean = r * (1.0 - p) / p;
        let z = rng.gen_range(0.0..3.0 * mean + 2.0);
        let tag = format!("r={r:.4} p={p:.4} z={z:.4}");
        match verify_call_expectation_envelopes(prm, CallQuery::new(z).unwrap(), ctl()) {
            Ok(rep) if !rep.passes(1e-10) => failures.push(FailureRecord {
                suite: "appendix",
                case: tag.clone(),
                detail: format!("expectation envelope slack negative: {rep:?}"),
            }),
            Err(e) => failures.push(FailureRecord {
                suite: "appendix",
                case: tag.clone(),
                detail: format!("envelope check failed: {e}"),
            }),
            _ => {}
        }
        let k: u64 = rng.gen_range(1..51);
        match verify_series_inequalities(prm, k, 1000) {
            Ok(rep) if !rep.passes(1e-10) => failures.push(FailureRecord {
                suite: "appendix",
                case: format!("{tag} k={k}"),
                detail: format!("series slack below -1e-10: {:?}", rep.slacks()),
            }),
            Err(e) => failures.push(FailureRecord {
                suite: "appendix",
                case: format!("{tag} k={k}"),
                detail: format!("series check failed: {e}"),
            }),
            _ => {}
        }
    }
    SuiteOutcome {
        cases: budget,
        failures,
    }
}

/// Exact-oracle dominance of the independent-sum bound on seeded
/// Bernoulli and geometric portfolios.
pub fn dominance(seed: u64, budget: usize) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..budget {
        let n = rng.gen_range(2..=10usize);
        let bernoulli = case % 2 == 0;
        let dists: Vec<DiscreteDist> = if bernoulli {
            (0..n)
                .map(|_| DiscreteDist::bernoulli(rng.gen_range(0.01..0.5)).unwrap())
                .collect()
        } else {
            (0..n)
                .map(|_| DiscreteDist::geometric(rng.gen_range(0.05..0.5), 1e-15).unwrap())
                .collect()
        };
        let tag = format!(
            "{} n={n} seed-case={case}",
            if bernoulli { "bernoulli" } else { "geometric" }
        );
        let model = DependencyModel::independent(dists.clone()).unwrap();
        let rep = match independent_mean_bound(&dists, n as f64, None) {
            Ok(r) => r,
            Err(e) => {
                failures.push(FailureRecord {
                    suite: "dominance",
                    case: tag,
                    detail: format!("bound failed: {e}"),
                });
                continue;
            }
        };
        let grid = default_z_grid(&model.exact_sum_distribution().unwrap());
        let profile = true_error_profile(&model, rep.matched_params, &grid, ctl()).unwrap();
        let budget_bound =
            rep.bound_value + rep.prefactor * rep.structural_certificate;
        for e in &profile.entries {
            if e.true_error > budget_bound + e.error_slop + 1e-9 {
                failures.push(FailureRecord {
                    suite: "dominance",
                    case: tag.clone(),
                    detail: format!(
                        "uniform bound {budget_bound:e} below true error {:e} at z={}",
                        e.true_error, e.z
                    ),
                });
            }
            if e.z > 1.0 {
                let crude = crude_delta_envelope(rep.matched_params, CallQuery::new(e.z).unwrap())
                    .unwrap();
                let non_uniform =
                    crude * (rep.structural_term + rep.structural_certificate);
                if e.true_error > non_uniform + e.error_slop + 1e-9 {
                    failures.push(FailureRecord {
                        suite: "dominance",
                        case: tag.clone(),
                        detail: format!(
                            "non-uniform bound {non_uniform:e} below true error {:e} at z={}",
                            e.true_error, e.z
                        ),
                    });
                }
            }
        }
    }
    SuiteOutcome {
        cases: budget,
        failures,
    }
}

/// Closed-form specialization identities and the convolution/pmf
/// cross-check.
pub fn identities(seed: u64, budget: usize) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..budget {
        let n = rng.gen_range(2..9usize);
        let r = n as f64;

        let ps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.6)).collect();
        let dists: Vec<DiscreteDist> = ps
            .iter()
            .map(|&p| DiscreteDist::bernoulli(p).unwrap())
            .collect();
        let general = independent_mean_bound(&dists, r, None).unwrap();
        let closed = bernoulli_nb_bound(&ps, r).unwrap();
        if (general.bound_value - closed).abs() > 1e-10 * closed.max(1e-300) {
            failures.push(FailureRecord {
                suite: "identities",
                case: format!("bernoulli case={case}"),
                detail: format!(
                    "general {:e} vs closed form {closed:e}",
                    general.bound_value
                ),
            });
        }

        let singleton: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let pairwise = pairwise_bernoulli_bound(&ps, &[], &singleton, r).unwrap();
        if (pairwise.bound_value - closed).abs() > 1e-10 * closed.max(1e-300) {
            failures.push(FailureRecord {
                suite: "identities",
                case: format!("pairwise-singleton case={case}"),
                detail: format!(
                    "pairwise {:e} vs closed form {closed:e}",
                    pairwise.bound_value
                ),
            });
        }

        let qs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..0.5)).collect();
        let dists: Vec<DiscreteDist> = qs
            .iter()
            .map(|&q| DiscreteDist::geometric(q, 1e-16).unwrap())
            .collect();
        let general = independent_mean_bound(&dists, r, None).unwrap();
        let closed = geometric_nb_bound(&qs, GeometricMatching::Mean, None, false).unwrap();
        let tol = 1e-10 * closed.value.max(1e-300) + general.structural_certificate;
        if (general.bound_value - closed.value).abs() > tol {
            failures.push(FailureRecord {
                suite: "identities",
                case: format!("geometric case={case}"),
                detail: format!(
                    "general {:e} vs closed form {:e}",
                    general.bound_value, closed.value
                ),
            });
        }

        // Convolved iid geometrics against the pmf, on a rotating (n, p).
        let p_conv = [0.5, 0.9, 0.95][case % 3];
        let n_conv = [2usize, 5, 10][(case / 3) % 3];
        let conv_dists: Vec<DiscreteDist> = (0..n_conv)
            .map(|_| DiscreteDist::geometric(1.0 - p_conv, 1e-15).unwrap())
            .collect();
        let v = DependencyModel::independent(conv_dists)
            .unwrap()
            .exact_sum_distribution()
            .unwrap();
        let prm = NBParams::new(n_conv as f64, p_conv).unwrap();
        for k in 0..v.len() as u64 {
            if (v.pmf(k) - nb_pmf(prm, k)).abs() > 1e-12 {
                failures.push(FailureRecord {
                    suite: "identities",
                    case: format!("additivity n={n_conv} p={p_conv}"),
                    detail: format!(
                        "pointwise gap {:e} at k={k}",
                        (v.pmf(k) - nb_pmf(prm, k)).abs()
                    ),
                });
                break;
            }
        }
    }
    SuiteOutcome {
        cases: budget,
        failures,
    }
}
