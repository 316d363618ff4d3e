//! `nbcall` - negative binomial call-function approximation toolkit.
//!
//! Subcommands:
//!
//! * `portfolio` - print the built-in 75-entry geometric benchmark.
//! * `compare`   - NB-vs-Poisson bound table over benchmark prefixes.
//! * `verify`    - seeded verification suites; non-zero exit on failure.
//! * `bound`     - evaluate bounds for a portfolio config file.
//! * `cdo`       - tranche expected-loss table with certificates.
//!
//! Exit status: 0 all checks pass, 1 verification failure, 2 usage or
//! config error.

mod config;
mod output;
mod suites;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use nbcall_core::bounds::{
    bernoulli_nb_bound, bernoulli_poisson_bound, geometric_nb_bound, geometric_poisson_bound,
    independent_mean_bound, independent_meanvar_bound, locally_dependent_mean_bound,
    locally_dependent_meanvar_bound, pairwise_bernoulli_bound, pairwise_poisson_bound,
    BoundReport, GeometricMatching,
};
use nbcall_core::cdo::{compare_bounds, tranche_expected_loss};
use nbcall_core::nb::SeriesControl;
use nbcall_core::oracle::{default_z_grid, true_error_profile};
use nbcall_core::reference::{benchmark_q, benchmark_q_full};

use config::{Kind, NbMode, Params};
use output::{sig6, write_out, Format};

#[derive(Parser)]
#[command(name = "nbcall", version, about = "negative binomial call-function bounds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Lemmas,
    Appendix,
    Dominance,
    Identities,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Mean,
    Meanvar,
    Explicit,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the built-in geometric benchmark portfolio.
    Portfolio {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Bound-comparison table over prefixes of the benchmark portfolio.
    Compare {
        /// Portfolio sizes, each in 10..=75.
        #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 20, 30, 40, 50])]
        n: Vec<usize>,
        /// Optional Bernoulli marginals; adds the Bernoulli columns.
        #[arg(long, value_delimiter = ',')]
        bernoulli_p: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run a seeded verification suite.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of randomized cases.
        #[arg(long, default_value_t = 1000)]
        budget: usize,
    },
    /// Evaluate error bounds for a portfolio config.
    Bound {
        #[arg(long)]
        config: PathBuf,
        /// Strike for an additional non-uniform report (requires z > 1).
        #[arg(long)]
        z: Option<f64>,
        /// Override the config's matching mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Relative truncation tolerance for series evaluation.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tranche expected-loss table with certified intervals.
    Cdo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Portfolio { out, format } => {
            let q = benchmark_q_full();
            let content = match format {
                Format::Csv => {
                    let mut s = String::from("index,q\n");
                    for (i, qi) in q.iter().enumerate() {
                        s.push_str(&format!("{},{}\n", i + 1, sig6(*qi)));
                    }
                    s
                }
                Format::Json => pretty(&json!({
                    "schema_version": 1,
                    "kind": "geometric",
                    "q": q,
                })),
            };
            write_out(&out, &content).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Compare {
            n,
            bernoulli_p,
            out,
            format,
        } => cmd_compare(&n, bernoulli_p.as_deref(), &out, format),
        Cmd::Verify {
            suite,
            seed,
            budget,
        } => Ok(cmd_verify(suite, seed, budget)),
        Cmd::Bound {
            config,
            z,
            mode,
            tol,
            out,
        } => cmd_bound(&config, z, mode, tol, &out),
        Cmd::Cdo {
            config,
            tol,
            out,
            format,
        } => cmd_cdo(&config, tol, &out, format),
    }
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serialization");
    s.push('\n');
    s
}

fn cmd_compare(
    ns: &[usize],
    bernoulli_p: Option<&[f64]>,
    out: &Option<PathBuf>,
    format: Format,
) -> Result<ExitCode, String> {
    for &n in ns {
        if !(10..=75).contains(&n) {
            return Err(format!("--n values must lie in 10..=75 (got {n})"));
        }
    }
    if let Some(ps) = bernoulli_p {
        if ps.len() < *ns.iter().max().unwrap_or(&0) {
            return Err(format!(
                "--bernoulli-p supplies {} marginals but the largest n is {}",
                ps.len(),
                ns.iter().max().unwrap()
            ));
        }
    }
    let mut rows = Vec::new();
    for &n in ns {
        let q = benchmark_q(n).map_err(|e| e.to_string())?;
        let poisson = geometric_poisson_bound(&q).map_err(|e| e.to_string())?;
        let mean = geometric_nb_bound(&q, GeometricMatching::Mean, None, false)
            .map_err(|e| e.to_string())?;
        let meanvar = geometric_nb_bound(&q, GeometricMatching::MeanVar, None, false)
            .map_err(|e| e.to_string())?;
        let bern = bernoulli_p
            .map(|ps| {
                let ps = &ps[..n];
                let poi = bernoulli_poisson_bound(ps);
                let nb = bernoulli_nb_bound(ps, n as f64).map_err(|e| e.to_string())?;
                Ok::<(f64, f64), String>((poi, nb))
            })
            .transpose()?;
        rows.push((n, poisson, mean.value, meanvar.value, bern));
    }
    let content = match format {
        Format::Csv => {
            let mut s = String::new();
            if bernoulli_p.is_some() {
                s.push_str("# bernoulli columns computed from user-supplied marginals\n");
            }
            s.push_str("n,geometric_poisson,geometric_nb_mean,geometric_nb_meanvar");
            if bernoulli_p.is_some() {
                s.push_str(",bernoulli_poisson,bernoulli_nb");
            }
            s.push('\n');
            for (n, poi, mean, mv, bern) in &rows {
                s.push_str(&format!("{n},{},{},{}", sig6(*poi), sig6(*mean), sig6(*mv)));
                if let Some((bpoi, bnb)) = bern {
                    s.push_str(&format!(",{},{}", sig6(*bpoi), sig6(*bnb)));
                }
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|(n, poi, mean, mv, bern)| {
                    let mut row = json!({
                        "n": n,
                        "geometric_poisson": poi,
                        "geometric_nb_mean": mean,
                        "geometric_nb_meanvar": mv,
                    });
                    if let Some((bpoi, bnb)) = bern {
                        row["bernoulli_poisson"] = json!(bpoi);
                        row["bernoulli_nb"] = json!(bnb);
                        row["bernoulli_note"] =
                            json!("computed from user-supplied marginals");
                    }
                    row
                })
                .collect();
            pretty(&json!({"schema_version": 1, "rows": rows}))
        }
    };
    write_out(out, &content).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suite: Suite, seed: u64, budget: usize) -> ExitCode {
    let outcome = match suite {
        Suite::Lemmas => suites::lemmas(seed, budget),
        Suite::Appendix => suites::appendix(seed, budget),
        Suite::Dominance => suites::dominance(seed, budget),
        Suite::Identities => suites::identities(seed, budget),
    };
    for failure in &outcome.failures {
        println!("{}", serde_json::to_string(failure).expect("record"));
    }
    println!(
        "{}",
        serde_json::to_string(&json!({
            "suite": format!("{suite:?}").to_lowercase(),
            "seed": seed,
            "cases": outcome.cases,
            "failures": outcome.failures.len(),
        }))
        .expect("summary")
    );
    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

/// Structured domain-infeasibility report: the config asked for something
/// the model cannot provide. Exit 2 (config error).
fn infeasible_exit(out: &Option<PathBuf>, what: &str) -> Result<ExitCode, String> {
    let content = pretty(&json!({
        "schema_version": 1,
        "error": {"type": "infeasible", "message": what},
    }));
    write_out(out, &content).map_err(|e| e.to_string())?;
    Ok(ExitCode::from(2))
}

fn cmd_bound(
    path: &Path,
    z: Option<f64>,
    mode: Option<ModeArg>,
    tol: f64,
    out: &Option<PathBuf>,
) -> Result<ExitCode, String> {
    let mut cfg = config::load(path).map_err(|e| e.to_string())?;
    if let Some(m) = mode {
        let mode = match m {
            ModeArg::Mean => NbMode::Mean,
            ModeArg::Meanvar => NbMode::MeanVar,
            ModeArg::Explicit => NbMode::Explicit,
        };
        let mut spec = cfg.nb.unwrap_or_default();
        spec.mode = mode;
        cfg.nb = Some(spec);
    }
    let ctl = SeriesControl::new(tol, 1_000_000).map_err(|e| e.to_string())?;
    let nb_mode = cfg.nb.unwrap_or_default().mode;
    let mut warnings: Vec<String> = Vec::new();

    let model = cfg
        .model()
        .transpose()
        .map_err(|e| e.to_string())?
        .ok_or_else(|| "config does not describe a model".to_string())?;
    let moments = model.moments().map_err(|e| e.to_string())?;

    // Bound reports from the general engine.
    let mut reports: Vec<BoundReport> = Vec::new();
    let r_default = cfg.size() as f64;
    let result: nbcall_core::Result<()> = (|| {
        match (&cfg.params, nb_mode) {
            (Params::Bernoulli { .. } | Params::Geometric { .. }, NbMode::Mean) => {
                let dists = cfg.independent_dists().unwrap()?;
                let r = cfg.nb.and_then(|s| s.r).unwrap_or(r_default);
                reports.push(independent_mean_bound(&dists, r, None)?);
                if let Some(zv) = z {
                    reports.push(independent_mean_bound(&dists, r, Some(zv))?);
                }
            }
            (Params::Bernoulli { .. } | Params::Geometric { .. }, NbMode::MeanVar) => {
                let dists = cfg.independent_dists().unwrap()?;
                reports.push(independent_meanvar_bound(&dists, None)?);
                if let Some(zv) = z {
                    reports.push(independent_meanvar_bound(&dists, Some(zv))?);
                }
            }
            (Params::Bernoulli { .. } | Params::Geometric { .. }, NbMode::Explicit) => {
                let dists = cfg.independent_dists().unwrap()?;
                let prm = cfg.resolve_params(moments.mean_v, None)?;
                let implied_mean = prm.r() * prm.q() / prm.p();
                if (implied_mean - moments.mean_v).abs() > 1e-9 * moments.mean_v.max(1.0) {
                    warnings.push(format!(
                        "explicit parameters imply mean {implied_mean}, model mean is {}; \
                         the bound formulas assume mean matching",
                        moments.mean_v
                    ));
                }
                let mut rep = independent_mean_bound(&dists, prm.r(), None)?;
                rep.matching_mode = nbcall_core::bounds::MatchingMode::Explicit;
                reports.push(rep);
            }
            (Params::Table { .. }, NbMode::Mean | NbMode::Explicit) => {
                let r = cfg.nb.and_then(|s| s.r).unwrap_or(r_default);
                reports.push(locally_dependent_mean_bound(&model, r, None)?);
                if let Some(zv) = z {
                    reports.push(locally_dependent_mean_bound(&model, r, Some(zv))?);
                }
            }
            (Params::Table { .. }, NbMode::MeanVar) => {
                reports.push(locally_dependent_meanvar_bound(&model, None)?);
                if let Some(zv) = z {
                    reports.push(locally_dependent_meanvar_bound(&model, Some(zv))?);
                }
            }
            (Params::Pairwise { p, pairs }, NbMode::Mean | NbMode::Explicit) => {
                let r = cfg.nb.and_then(|s| s.r).unwrap_or(r_default);
                let neighborhoods = cfg.neighborhoods.clone().unwrap();
                reports.push(pairwise_bernoulli_bound(p, pairs, &neighborhoods, r)?);
            }
            (Params::Pairwise { .. }, NbMode::MeanVar) => {
                return Err(nbcall_core::Error::UnsupportedLaw {
                    op: "variance-matched bound",
                    requires: "an explicit joint law (pairwise input determines only the mean branch)",
                });
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        return match e {
            nbcall_core::Error::Infeasible(msg) => infeasible_exit(out, &msg),
            other => Err(other.to_string()),
        };
    }

    // Closed-form competitors.
    let closed = match &cfg.params {
        Params::Bernoulli { p } => {
            let r = cfg.nb.and_then(|s| s.r).unwrap_or(r_default);
            json!({
                "bernoulli_nb": bernoulli_nb_bound(p, r).ok(),
                "bernoulli_poisson": bernoulli_poisson_bound(p),
            })
        }
        Params::Geometric { q } => {
            let r = cfg.nb.and_then(|s| s.r);
            let mean = geometric_nb_bound(q, GeometricMatching::Mean, r, false)
                .map_err(|e| e.to_string())?;
            let meanvar = geometric_nb_bound(q, GeometricMatching::MeanVar, None, false).ok();
            warnings.extend(mean.notes.iter().cloned());
            json!({
                "geometric_nb_mean": mean.value,
                "geometric_nb_meanvar": meanvar.as_ref().map(|b| b.value),
                "geometric_nb_meanvar_general_constant":
                    meanvar.as_ref().and_then(|b| b.general_constant_value),
                "geometric_poisson": geometric_poisson_bound(q).map_err(|e| e.to_string())?,
            })
        }
        Params::Pairwise { p, pairs } => {
            let neighborhoods = cfg.neighborhoods.clone().unwrap();
            json!({
                "pairwise_poisson":
                    pairwise_poisson_bound(p, pairs, &neighborhoods).map_err(|e| e.to_string())?,
            })
        }
        Params::Table { .. } => json!(null),
    };

    // Exact oracle when the sum law is materializable.
    let oracle = match model.exact_sum_distribution() {
        Ok(dist) => {
            let grid = cfg.z_grid.clone().unwrap_or_else(|| default_z_grid(&dist));
            let params = reports
                .first()
                .map(|r| r.matched_params)
                .unwrap_or_else(|| cfg.resolve_params(moments.mean_v, None).unwrap());
            match true_error_profile(&model, params, &grid, ctl) {
                Ok(profile) => {
                    let max_err = profile.max_true_error();
                    for rep in &mut reports {
                        rep.true_error = Some(max_err);
                    }
                    json!({
                        "z_grid": grid,
                        "max_true_error": max_err,
                        "entries": profile.entries,
                    })
                }
                Err(e) => {
                    warnings.push(format!("oracle unavailable: {e}"));
                    json!(null)
                }
            }
        }
        Err(e) => {
            warnings.push(format!("oracle unavailable: {e}"));
            json!(null)
        }
    };

    let kind = match cfg.kind {
        Kind::Bernoulli => "bernoulli",
        Kind::Geometric => "geometric",
        Kind::Table => "table",
        Kind::Pairwise => "pairwise",
    };
    let content = pretty(&json!({
        "schema_version": 1,
        "kind": kind,
        "n": cfg.size(),
        "nb_mode": match nb_mode {
            NbMode::Mean => "mean",
            NbMode::MeanVar => "meanvar",
            NbMode::Explicit => "explicit",
        },
        "model_mean": moments.mean_v,
        "model_variance": moments.var_v,
        "reports": reports,
        "closed_forms": closed,
        "oracle": oracle,
        "warnings": warnings,
    }));
    write_out(out, &content).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_cdo(
    path: &Path,
    tol: f64,
    out: &Option<PathBuf>,
    format: Format,
) -> Result<ExitCode, String> {
    let cfg = config::load(path).map_err(|e| e.to_string())?;
    let ctl = SeriesControl::new(tol, 1_000_000).map_err(|e| e.to_string())?;
    let portfolio = cfg.portfolio()?;
    portfolio.validate().map_err(|e| e.to_string())?;
    if portfolio.tranches.is_empty() {
        return Err("config has no tranches".to_string());
    }
    let mu: f64 = portfolio.marginals.iter().sum();
    let params = match cfg.resolve_params(mu, None) {
        Ok(p) => p,
        Err(nbcall_core::Error::Infeasible(msg)) => return infeasible_exit(out, &msg),
        Err(e) => return Err(e.to_string()),
    };

    let mut rows = Vec::new();
    for &tranche in &portfolio.tranches {
        let rep = tranche_expected_loss(&portfolio, tranche, params, ctl)
            .map_err(|e| e.to_string())?;
        rows.push(rep);
    }
    let comparison = compare_bounds(&portfolio, params.r()).map_err(|e| e.to_string())?;

    let content = match format {
        Format::Json => pretty(&json!({
            "schema_version": 1,
            "obligors": portfolio.obligors(),
            "recovery": portfolio.recovery,
            "matched_params": {"r": params.r(), "p": params.p()},
            "tranches": rows,
            "comparison": comparison,
        })),
        Format::Csv => {
            let mut s = String::from(
                "attachment,detachment,z_count,tranche_loss,tranche_interval,\
                 attach_call,attach_interval,detach_call,detach_interval,\
                 nb_bound,poisson_bound,note\n",
            );
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    sig6(r.tranche.attachment),
                    sig6(r.tranche.detachment),
                    sig6(r.attachment_leg.strike_count_units),
                    sig6(r.expected_tranche_loss),
                    sig6(r.tranche_interval),
                    sig6(r.attachment_leg.estimate),
                    sig6(r.attachment_leg.interval),
                    sig6(r.detachment_leg.estimate),
                    sig6(r.detachment_leg.interval),
                    sig6(r.nb_bound.bound_value),
                    sig6(r.poisson_bound),
                    r.note.clone().unwrap_or_default().replace(',', ";"),
                ));
            }
            s.push_str("# comparison\n");
            s.push_str("obligors,r,independent_nb,independent_poisson,dependent_nb,dependent_poisson\n");
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                comparison.obligors,
                sig6(comparison.r),
                sig6(comparison.independent_nb),
                sig6(comparison.independent_poisson),
                comparison.dependent_nb.map(sig6).unwrap_or_default(),
                comparison.dependent_poisson.map(sig6).unwrap_or_default(),
            ));
            s
        }
    };
    write_out(out, &content).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}
