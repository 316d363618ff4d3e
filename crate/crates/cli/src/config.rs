//! Portfolio / model configuration files.
//!
//! UTF-8 JSON with a `kind` discriminator and kind-specific `params`.
//! Unknown keys are rejected so typos surface as errors instead of
//! silently changing the run.

use std::path::Path;

use nbcall_core::cdo::{PairSpec, Portfolio, Tranche};
use nbcall_core::dependency::DependencyModel;
use nbcall_core::dist::DiscreteDist;
use nbcall_core::nb::{match_mean, match_mean_var, NBParams};
use serde::Deserialize;

/// Tail tolerance for per-variable support truncation in model building.
pub const SUPPORT_TAIL_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Bernoulli,
    Geometric,
    Table,
    Pairwise,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum Params {
    Bernoulli {
        p: Vec<f64>,
    },
    Geometric {
        q: Vec<f64>,
    },
    Table {
        outcomes: Vec<Vec<u32>>,
        probs: Vec<f64>,
    },
    Pairwise {
        p: Vec<f64>,
        pairs: Vec<(usize, usize, f64)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NbMode {
    Mean,
    MeanVar,
    Explicit,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NbSpec {
    pub mode: NbMode,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
}

impl Default for NbSpec {
    fn default() -> Self {
        Self {
            mode: NbMode::Mean,
            r: None,
            p: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrancheSpec {
    pub attachment: f64,
    pub detachment: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kind: Kind,
    pub params: Params,
    #[serde(default)]
    pub neighborhoods: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub nb: Option<NbSpec>,
    #[serde(default)]
    pub z_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub tranches: Option<Vec<TrancheSpec>>,
    #[serde(default)]
    pub recovery: Option<f64>,
}

/// A config error that names what went wrong and where.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn load(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ConfigFile = serde_json::from_str(&text)
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    validate(&cfg).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn validate(cfg: &ConfigFile) -> Result<(), String> {
    match (&cfg.kind, &cfg.params) {
        (Kind::Bernoulli, Params::Bernoulli { p }) => {
            if p.is_empty() {
                return Err("params.p: empty marginal list".into());
            }
        }
        (Kind::Geometric, Params::Geometric { q }) => {
            if q.is_empty() {
                return Err("params.q: empty failure-probability list".into());
            }
        }
        (Kind::Table, Params::Table { outcomes, probs }) => {
            if outcomes.len() != probs.len() {
                return Err("params.outcomes/params.probs: length mismatch".into());
            }
            if cfg.neighborhoods.is_none() {
                return Err("neighborhoods: required for kind \"table\"".into());
            }
        }
        (Kind::Pairwise, Params::Pairwise { p, .. }) => {
            if p.is_empty() {
                return Err("params.p: empty marginal list".into());
            }
            if cfg.neighborhoods.is_none() {
                return Err("neighborhoods: required for kind \"pairwise\"".into());
            }
        }
        _ => {
            return Err("params: shape does not match the declared kind".into());
        }
    }
    if let Some(r) = cfg.recovery {
        if !(0.0..=1.0).contains(&r) {
            return Err(format!("recovery: {r} outside [0, 1]"));
        }
    }
    if let Some(ts) = &cfg.tranches {
        for (i, t) in ts.iter().enumerate() {
            if !(0.0 <= t.attachment && t.attachment < t.detachment && t.detachment <= 1.0) {
                return Err(format!(
                    "tranches[{i}]: [{}, {}] must satisfy 0 <= a < d <= 1",
                    t.attachment, t.detachment
                ));
            }
        }
    }
    if let Some(nb) = &cfg.nb {
        if nb.mode == NbMode::Explicit && (nb.r.is_none() || nb.p.is_none()) {
            return Err("nb: explicit mode needs both r and p".into());
        }
    }
    Ok(())
}

impl ConfigFile {
    pub fn size(&self) -> usize {
        match &self.params {
            Params::Bernoulli { p } => p.len(),
            Params::Geometric { q } => q.len(),
            Params::Table { outcomes, .. } => outcomes.first().map_or(0, |o| o.len()),
            Params::Pairwise { p, .. } => p.len(),
        }
    }

    /// Per-index distributions for the independent kinds.
    pub fn independent_dists(&self) -> Option<nbcall_core::Result<Vec<DiscreteDist>>> {
        match &self.params {
            Params::Bernoulli { p } => {
                Some(p.iter().map(|&pi| DiscreteDist::bernoulli(pi)).collect())
            }
            Params::Geometric { q } => Some(
                q.iter()
                    .map(|&qi| DiscreteDist::geometric(qi, SUPPORT_TAIL_TOL))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// A dependency model when the config describes one exactly.
    pub fn model(&self) -> Option<nbcall_core::Result<DependencyModel>> {
        match &self.params {
            Params::Bernoulli { .. } | Params::Geometric { .. } => {
                let dists = match self.independent_dists()? {
                    Ok(d) => d,
                    Err(e) => return Some(Err(e)),
                };
                Some(DependencyModel::independent(dists))
            }
            Params::Table { outcomes, probs } => {
                let a = self.neighborhoods.clone()?;
                let b = a.clone();
                Some(DependencyModel::from_table(
                    outcomes.clone(),
                    probs.clone(),
                    a,
                    b,
                ))
            }
            Params::Pairwise { p, pairs } => {
                let a = self.neighborhoods.clone()?;
                Some(DependencyModel::pairwise_bernoulli(p.clone(), pairs, a))
            }
        }
    }

    /// Resolve the NB parameters for this config against the model mean
    /// (and variance when requested).
    pub fn resolve_params(&self, mean_v: f64, var_v: Option<f64>) -> nbcall_core::Result<NBParams> {
        let spec = self.nb.unwrap_or_default();
        match spec.mode {
            NbMode::Mean => {
                let r = spec.r.unwrap_or(self.size() as f64);
                match_mean(mean_v, r)
            }
            NbMode::MeanVar => {
                let var = var_v.ok_or_else(|| {
                    nbcall_core::Error::Infeasible(
                        "variance matching needs a model variance".into(),
                    )
                })?;
                match_mean_var(mean_v, var)
            }
            NbMode::Explicit => NBParams::new(spec.r.unwrap(), spec.p.unwrap()),
        }
    }

    /// CDO portfolio view of the config (Bernoulli or pairwise kinds).
    pub fn portfolio(&self) -> Result<Portfolio, String> {
        let marginals = match &self.params {
            Params::Bernoulli { p } => p.clone(),
            Params::Pairwise { p, .. } => p.clone(),
            _ => return Err("kind: CDO analytics need Bernoulli default indicators".into()),
        };
        let dependence = match &self.params {
            Params::Pairwise { pairs, .. } => Some(PairSpec {
                pairs: pairs.clone(),
                neighborhoods: self
                    .neighborhoods
                    .clone()
                    .ok_or_else(|| "neighborhoods: required for kind \"pairwise\"".to_string())?,
            }),
            _ => None,
        };
        let tranches = self
            .tranches
            .clone()
            .unwrap_or_default()
            .iter()
            .map(|t| Tranche {
                attachment: t.attachment,
                detachment: t.detachment,
            })
            .collect();
        Ok(Portfolio {
            recovery: self.recovery.unwrap_or(0.0),
            marginals,
            dependence,
            tranches,
        })
    }
}
