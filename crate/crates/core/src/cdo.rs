//! Tranche expected-loss analytics for a homogeneous-recovery credit
//! portfolio.
//!
//! With `N` obligors, constant recovery `R` and default indicators
//! `ξ_i`, the percentage portfolio loss is `L = (1-R)/N · Σ ξ_i`, so a
//! tranche call at attachment `a` reduces to a count-space call:
//! `E[(L - a)^+] = (1-R)/N · E[(V - z)^+]` at `z = N a / (1-R)`. The NB
//! approximation of the count call carries a certified error interval
//! from the matched bound plus the truncation certificates.

use serde::Serialize;

use crate::bounds::{
    bernoulli_nb_bound, bernoulli_poisson_bound, independent_mean_bound, pairwise_bernoulli_bound,
    pairwise_poisson_bound, BoundReport,
};
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};
use crate::nb::{nb_call_expectation, CallQuery, NBParams, SeriesControl};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tranche {
    pub attachment: f64,
    pub detachment: f64,
}

/// Neighborhood pair probabilities for a locally dependent portfolio.
#[derive(Debug, Clone, Serialize)]
pub struct PairSpec {
    pub pairs: Vec<(usize, usize, f64)>,
    pub neighborhoods: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Portfolio {
    pub recovery: f64,
    pub marginals: Vec<f64>,
    pub dependence: Option<PairSpec>,
    pub tranches: Vec<Tranche>,
}

impl Portfolio {
    pub fn validate(&self) -> Result<()> {
        if self.marginals.is_empty() {
            return Err(Error::InvalidModel("portfolio has no obligors".into()));
        }
        if !(0.0..1.0).contains(&self.recovery) && self.recovery != 1.0 {
            return Err(Error::InvalidParameter {
                name: "recovery",
                value: self.recovery,
                reason: "recovery rate must lie in [0, 1]",
            });
        }
        for &p in &self.marginals {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter {
                    name: "p_i",
                    value: p,
                    reason: "default probabilities must lie in [0, 1]",
                });
            }
        }
        for t in &self.tranches {
            if !(0.0 <= t.attachment && t.attachment < t.detachment && t.detachment <= 1.0) {
                return Err(Error::InvalidModel(format!(
                    "tranche [{}, {}] must satisfy 0 <= a < d <= 1",
                    t.attachment, t.detachment
                )));
            }
        }
        if let Some(dep) = &self.dependence {
            if dep.neighborhoods.len() != self.marginals.len() {
                return Err(Error::InvalidModel(
                    "neighborhood map must cover every obligor".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn obligors(&self) -> usize {
        self.marginals.len()
    }

    /// Count-space strike for a percentage-of-notional level.
    pub fn count_strike(&self, level: f64) -> f64 {
        self.obligors() as f64 * level / (1.0 - self.recovery)
    }
}

/// One leg of a tranche: the call expectation at a single strike, scaled
/// back to percentage-of-notional units.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CallLeg {
    pub level: f64,
    pub strike_count_units: f64,
    pub estimate: f64,
    /// Half-width of the certified interval around the estimate.
    pub interval: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrancheReport {
    pub tranche: Tranche,
    pub attachment_leg: CallLeg,
    pub detachment_leg: CallLeg,
    /// `E[(L-a)^+] - E[(L-d)^+]`, the expected tranche loss.
    pub expected_tranche_loss: f64,
    pub tranche_interval: f64,
    pub nb_bound: BoundReport,
    pub poisson_bound: f64,
    pub note: Option<String>,
}

fn call_leg(
    portfolio: &Portfolio,
    level: f64,
    params: NBParams,
    bound_with_cert: f64,
    ctl: SeriesControl,
) -> Result<CallLeg> {
    let n = portfolio.obligors() as f64;
    let scale = (1.0 - portfolio.recovery) / n;
    if level >= 1.0 - portfolio.recovery || scale == 0.0 {
        // The loss cannot exceed 1 - R, so the call is identically zero.
        return Ok(CallLeg {
            level,
            strike_count_units: if scale == 0.0 {
                f64::INFINITY
            } else {
                portfolio.count_strike(level)
            },
            estimate: 0.0,
            interval: 0.0,
        });
    }
    let z = portfolio.count_strike(level);
    let call = nb_call_expectation(params, CallQuery::new(z)?, ctl)?;
    Ok(CallLeg {
        level,
        strike_count_units: z,
        estimate: scale * call.value,
        interval: scale * (bound_with_cert + call.tail_bound),
    })
}

/// Expected loss of one tranche with a certified interval. Dependent
/// portfolios use the pairwise Bernoulli bound, independent ones the
/// general independent-sum bound on the Bernoulli marginals.
pub fn tranche_expected_loss(
    portfolio: &Portfolio,
    tranche: Tranche,
    params: NBParams,
    ctl: SeriesControl,
) -> Result<TrancheReport> {
    portfolio.validate()?;
    let (nb_bound, poisson_bound) = portfolio_bounds(portfolio, params.r())?;
    let cert = nb_bound.bound_value + nb_bound.structural_certificate * nb_bound.prefactor;

    let note = if portfolio.recovery >= 1.0 {
        Some("recovery 1 wipes out every loss; all values are exactly zero".into())
    } else if tranche.attachment >= 1.0 - portfolio.recovery {
        Some(format!(
            "attachment {} is at or beyond the maximal loss {}; the tranche cannot be hit",
            tranche.attachment,
            1.0 - portfolio.recovery
        ))
    } else {
        None
    };

    let attachment_leg = call_leg(portfolio, tranche.attachment, params, cert, ctl)?;
    let detachment_leg = call_leg(portfolio, tranche.detachment, params, cert, ctl)?;
    Ok(TrancheReport {
        tranche,
        attachment_leg,
        detachment_leg,
        expected_tranche_loss: attachment_leg.estimate - detachment_leg.estimate,
        tranche_interval: attachment_leg.interval + detachment_leg.interval,
        nb_bound,
        poisson_bound,
        note,
    })
}

fn portfolio_bounds(portfolio: &Portfolio, r: f64) -> Result<(BoundReport, f64)> {
    match &portfolio.dependence {
        Some(dep) => {
            let nb = pairwise_bernoulli_bound(
                &portfolio.marginals,
                &dep.pairs,
                &dep.neighborhoods,
                r,
            )?;
            let poisson =
                pairwise_poisson_bound(&portfolio.marginals, &dep.pairs, &dep.neighborhoods)?;
            Ok((nb, poisson))
        }
        None => {
            let dists: Vec<DiscreteDist> = portfolio
                .marginals
                .iter()
                .map(|&p| DiscreteDist::bernoulli(p))
                .collect::<Result<_>>()?;
            let nb = independent_mean_bound(&dists, r, None)?;
            let poisson = bernoulli_poisson_bound(&portfolio.marginals);
            Ok((nb, poisson))
        }
    }
}

/// NB-vs-Poisson comparison rows for a portfolio.
#[derive(Debug, Clone, Serialize)]
pub struct BoundComparison {
    pub obligors: usize,
    pub r: f64,
    pub independent_nb: f64,
    pub independent_poisson: f64,
    pub dependent_nb: Option<f64>,
    pub dependent_poisson: Option<f64>,
}

/// Evaluates both bound families on the marginals, and additionally on
/// the dependent description when one is present.
pub fn compare_bounds(portfolio: &Portfolio, r: f64) -> Result<BoundComparison> {
    portfolio.validate()?;
    let independent_nb = bernoulli_nb_bound(&portfolio.marginals, r)?;
    let independent_poisson = bernoulli_poisson_bound(&portfolio.marginals);
    let (dependent_nb, dependent_poisson) = match &portfolio.dependence {
        Some(dep) => {
            let nb = pairwise_bernoulli_bound(
                &portfolio.marginals,
                &dep.pairs,
                &dep.neighborhoods,
                r,
            )?
            .bound_value;
            let poi =
                pairwise_poisson_bound(&portfolio.marginals, &dep.pairs, &dep.neighborhoods)?;
            (Some(nb), Some(poi))
        }
        None => (None, None),
    };
    Ok(BoundComparison {
        obligors: portfolio.obligors(),
        r,
        independent_nb,
        independent_poisson,
        dependent_nb,
        dependent_poisson,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependency::DependencyModel;
    use crate::nb::match_mean;

    fn ctl() -> SeriesControl {
        SeriesControl::default()
    }

    fn independent_portfolio(n: usize, p: f64, recovery: f64) -> Portfolio {
        Portfolio {
            recovery,
            marginals: vec![p; n],
            dependence: None,
            tranches: vec![Tranche {
                attachment: 0.03,
                detachment: 0.07,
            }],
        }
    }

    fn matched(portfolio: &Portfolio) -> NBParams {
        let mu: f64 = portfolio.marginals.iter().sum();
        match_mean(mu, portfolio.obligors() as f64).unwrap()
    }

    #[test]
    fn full_recovery_wipes_out_losses() {
        let pf = independent_portfolio(10, 0.05, 1.0);
        let prm = matched(&pf);
        let rep = tranche_expected_loss(&pf, pf.tranches[0], prm, ctl()).unwrap();
        assert_eq!(rep.expected_tranche_loss, 0.0);
        assert_eq!(rep.tranche_interval, 0.0);
        assert!(rep.note.is_some());
    }

    #[test]
    fn zero_attachment_reproduces_scaled_mean() {
        let pf = Portfolio {
            recovery: 0.4,
            marginals: vec![0.05; 10],
            dependence: None,
            tranches: vec![Tranche {
                attachment: 0.0,
                detachment: 0.6,
            }],
        };
        let prm = matched(&pf);
        let rep = tranche_expected_loss(&pf, pf.tranches[0], prm, ctl()).unwrap();
        let mu: f64 = pf.marginals.iter().sum();
        let scale = (1.0 - pf.recovery) / pf.obligors() as f64;
        // Mean matching makes the z = 0 call exactly the mean.
        assert!((rep.attachment_leg.estimate - scale * mu).abs() < 1e-12);
    }

    #[test]
    fn interval_contains_oracle_value() {
        let pf = independent_portfolio(10, 0.05, 0.4);
        let prm = matched(&pf);
        let rep = tranche_expected_loss(&pf, pf.tranches[0], prm, ctl()).unwrap();

        let dists: Vec<_> = pf
            .marginals
            .iter()
            .map(|&p| DiscreteDist::bernoulli(p).unwrap())
            .collect();
        let v = DependencyModel::independent(dists)
            .unwrap()
            .exact_sum_distribution()
            .unwrap();
        let scale = (1.0 - pf.recovery) / pf.obligors() as f64;
        let exact_attach = scale * v.call_expectation(pf.count_strike(0.03)).0;
        assert!(
            (rep.attachment_leg.estimate - exact_attach).abs() <= rep.attachment_leg.interval,
            "oracle {} outside {} ± {}",
            exact_attach,
            rep.attachment_leg.estimate,
            rep.attachment_leg.interval
        );
    }

    #[test]
    fn loss_is_monotone_in_attachment() {
        let pf = independent_portfolio(10, 0.08, 0.4);
        let prm = matched(&pf);
        let mut prev = f64::INFINITY;
        for a in [0.0, 0.02, 0.05, 0.1, 0.2, 0.4] {
            let leg = call_leg(&pf, a, prm, 0.0, ctl()).unwrap();
            assert!(leg.estimate <= prev + 1e-12);
            prev = leg.estimate;
        }
    }

    #[test]
    fn doubling_obligors_and_halving_attachment_keeps_count_strike() {
        let small = independent_portfolio(10, 0.05, 0.4);
        let large = independent_portfolio(20, 0.05, 0.4);
        let z_small = small.count_strike(0.06);
        let z_large = large.count_strike(0.03);
        assert!((z_small - z_large).abs() < 1e-12);
    }

    #[test]
    fn attachment_beyond_max_loss_reports_zero_with_note() {
        let mut pf = independent_portfolio(10, 0.05, 0.4);
        pf.tranches = vec![Tranche {
            attachment: 0.65,
            detachment: 0.9,
        }];
        let prm = matched(&pf);
        let rep = tranche_expected_loss(&pf, pf.tranches[0], prm, ctl()).unwrap();
        assert_eq!(rep.expected_tranche_loss, 0.0);
        assert!(rep.note.unwrap().contains("maximal loss"));
    }

    #[test]
    fn dependent_portfolio_dispatches_pairwise_bound() {
        let n = 6;
        let neighborhoods: Vec<Vec<usize>> = (0..n)
            .map(|i: usize| (i.saturating_sub(1)..=(i + 1).min(n - 1)).collect())
            .collect();
        let pairs: Vec<(usize, usize, f64)> = (0..n - 1).map(|i| (i, i + 1, 0.02)).collect();
        let pf = Portfolio {
            recovery: 0.4,
            marginals: vec![0.1; n],
            dependence: Some(PairSpec {
                pairs,
                neighborhoods,
            }),
            tranches: vec![Tranche {
                attachment: 0.03,
                detachment: 0.1,
            }],
        };
        let prm = matched(&pf);
        let rep = tranche_expected_loss(&pf, pf.tranches[0], prm, ctl()).unwrap();
        assert_eq!(rep.nb_bound.bound_name, "pairwise-bernoulli");
        assert!(rep.poisson_bound > 0.0);
    }

    #[test]
    fn comparison_columns_coincide_for_singleton_neighborhoods() {
        let n = 5;
        let pf = Portfolio {
            recovery: 0.4,
            marginals: vec![0.07; n],
            dependence: Some(PairSpec {
                pairs: vec![],
                neighborhoods: (0..n).map(|i| vec![i]).collect(),
            }),
            tranches: vec![],
        };
        let cmp = compare_bounds(&pf, n as f64).unwrap();
        let dep_nb = cmp.dependent_nb.unwrap();
        let dep_poi = cmp.dependent_poisson.unwrap();
        assert!((dep_nb - cmp.independent_nb).abs() <= 1e-12 * cmp.independent_nb);
        assert!((dep_poi - cmp.independent_poisson).abs() <= 1e-12 * cmp.independent_poisson);
    }

    #[test]
    fn tiny_portfolio_comparison_is_reported_without_ordering_claim() {
        let pf = Portfolio {
            recovery: 0.4,
            marginals: vec![0.01, 0.01],
            dependence: None,
            tranches: vec![],
        };
        let cmp = compare_bounds(&pf, 2.0).unwrap();
        assert!(cmp.independent_nb.is_finite());
        assert!(cmp.independent_poisson.is_finite());
    }

    #[test]
    fn portfolio_validation_rejects_bad_tranches() {
        let mut pf = independent_portfolio(3, 0.1, 0.4);
        pf.tranches = vec![Tranche {
            attachment: 0.5,
            detachment: 0.2,
        }];
        assert!(pf.validate().is_err());
    }
}
