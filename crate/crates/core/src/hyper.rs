//! Fixed prior constants and runtime tolerances for the variational engine
//! and the Gibbs oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the inclusion prior is chosen when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Logit prior with structural data when available, Beta-Bernoulli
    /// otherwise.
    #[default]
    Auto,
    /// Force the structural logit prior (errors if no structural data).
    Logit,
    /// Force the Beta-Bernoulli prior, ignoring structural data.
    BetaBernoulli,
}

/// Scalar hyperparameter that may also be given per group.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerGroup {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerGroup {
    pub fn resolve(&self, n_groups: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            PerGroup::Scalar(v) => Ok(vec![*v; n_groups]),
            PerGroup::Vector(v) => {
                if v.len() != n_groups {
                    Err(Error::validation(format!(
                        "{name} has {} entries for {n_groups} groups",
                        v.len()
                    )))
                } else {
                    Ok(v.clone())
                }
            }
        }
    }
}

fn scalar(v: f64) -> PerGroup {
    PerGroup::Scalar(v)
}

/// All fixed prior constants plus runtime tolerances. Field defaults follow
/// the noninformative settings used throughout the simulation studies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// Noise variance prior: `zeta_j ~ IG(h1, h2)`.
    pub h1: f64,
    pub h2: f64,
    /// Slab deviation variance prior: `xi1 ~ IG(a1, b1)` per group.
    pub a1: PerGroup,
    pub b1: PerGroup,
    /// Spike deviation variance prior: `xi0 ~ IG(a0, b0)` per group.
    pub a0: PerGroup,
    pub b0: PerGroup,
    /// ICAR slab variance tuning parameter.
    pub q: f64,
    /// Logit intercept; -2.944 gives prior inclusion 0.05 at zero
    /// structural signal.
    pub alpha0: PerGroup,
    /// Prior on the logit slope: `alpha1 ~ N(w, tau2)`.
    pub w: PerGroup,
    pub tau2: PerGroup,
    /// Beta-Bernoulli hyperparameters.
    pub e: PerGroup,
    pub f: PerGroup,
    /// Median-model selection threshold on marginal inclusion probability.
    pub selection_threshold: f64,
    /// Stop when the ELBO changes less than this between sweeps.
    pub elbo_tolerance: f64,
    pub max_iters: usize,
    /// Monte Carlo draws for the intractable slab-variance terms of the
    /// inclusion log-odds.
    pub mc_samples: usize,
    /// Group-imbalance initialization constant: the slope mean starts at
    /// `init_c * S_g / mean(N_g)`.
    pub init_c: f64,
    /// Step size for the inclusion-probability update: `nu <- (1-l)*nu +
    /// l*logistic(rho)`. 1 is the undamped coordinate maximizer; smaller
    /// values keep the trajectory away from the absorbing all-in/all-out
    /// states that a saturating initialization would otherwise lock in.
    pub nu_damping: f64,
    pub prior_mode: PriorMode,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            h1: 2.0,
            h2: 1.0,
            a1: scalar(2.0),
            b1: scalar(1.0),
            a0: scalar(2.0),
            b0: scalar(1.0),
            q: 100.0,
            alpha0: scalar(-2.944),
            w: scalar(0.0),
            tau2: scalar(100.0),
            e: scalar(0.1),
            f: scalar(1.9),
            selection_threshold: 0.5,
            elbo_tolerance: 0.01,
            max_iters: 200,
            mc_samples: 1000,
            init_c: 75.0,
            nu_damping: 0.5,
            prior_mode: PriorMode::Auto,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self, n_groups: usize) -> Result<ResolvedHyperparameters> {
        let resolved = ResolvedHyperparameters {
            h1: self.h1,
            h2: self.h2,
            a1: self.a1.resolve(n_groups, "a1")?,
            b1: self.b1.resolve(n_groups, "b1")?,
            a0: self.a0.resolve(n_groups, "a0")?,
            b0: self.b0.resolve(n_groups, "b0")?,
            q: self.q,
            alpha0: self.alpha0.resolve(n_groups, "alpha0")?,
            w: self.w.resolve(n_groups, "w")?,
            tau2: self.tau2.resolve(n_groups, "tau2")?,
            e: self.e.resolve(n_groups, "e")?,
            f: self.f.resolve(n_groups, "f")?,
            selection_threshold: self.selection_threshold,
            elbo_tolerance: self.elbo_tolerance,
            max_iters: self.max_iters,
            mc_samples: self.mc_samples,
            init_c: self.init_c,
            nu_damping: self.nu_damping,
            prior_mode: self.prior_mode,
        };
        for (name, v) in [
            ("h1", self.h1),
            ("h2", self.h2),
            ("q", self.q),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, vs) in [
            ("a1", &resolved.a1),
            ("b1", &resolved.b1),
            ("a0", &resolved.a0),
            ("b0", &resolved.b0),
            ("tau2", &resolved.tau2),
            ("e", &resolved.e),
            ("f", &resolved.f),
        ] {
            if let Some(v) = vs.iter().find(|v| !(**v > 0.0)) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(resolved.selection_threshold > 0.0 && resolved.selection_threshold < 1.0) {
            return Err(Error::validation(format!(
                "selection threshold must lie in (0,1), got {}",
                resolved.selection_threshold
            )));
        }
        if resolved.mc_samples == 0 {
            return Err(Error::validation("mc_samples must be at least 1"));
        }
        if resolved.max_iters == 0 {
            return Err(Error::validation("max_iters must be at least 1"));
        }
        if !(resolved.elbo_tolerance > 0.0) {
            return Err(Error::validation("elbo_tolerance must be positive"));
        }
        if !(resolved.nu_damping > 0.0 && resolved.nu_damping <= 1.0) {
            return Err(Error::validation(format!(
                "nu_damping must lie in (0, 1], got {}",
                resolved.nu_damping
            )));
        }
        Ok(resolved)
    }
}

/// Hyperparameters with every per-group field expanded to one value per
/// group; the form consumed by the engines.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedHyperparameters {
    pub h1: f64,
    pub h2: f64,
    pub a1: Vec<f64>,
    pub b1: Vec<f64>,
    pub a0: Vec<f64>,
    pub b0: Vec<f64>,
    pub q: f64,
    pub alpha0: Vec<f64>,
    pub w: Vec<f64>,
    pub tau2: Vec<f64>,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub selection_threshold: f64,
    pub elbo_tolerance: f64,
    pub max_iters: usize,
    pub mc_samples: usize,
    pub init_c: f64,
    pub nu_damping: f64,
    pub prior_mode: PriorMode,
}
