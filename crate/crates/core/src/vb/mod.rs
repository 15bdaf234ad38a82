//! Mean-field coordinate-ascent engine.
//!
//! [`fit`] is the one-call entry point; [`VbEngine`] exposes the individual
//! update steps and the ELBO so callers can drive sweeps manually or
//! inspect the state mid-run (the state stays accessible after a failed
//! sweep, holding the last good values).

pub mod elbo;
pub mod state;
pub mod updates;

use serde::{Deserialize, Serialize};

use crate::data::{SmoothingMatrix, StructuralPrior, StudyDataset};
use crate::error::{Error, Result};
use crate::hyper::Hyperparameters;
use crate::rng::{self, Stream};

pub use state::{FitWorkspace, Mode, VariationalState};

/// One selected edge of the median model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectedEdge {
    /// Flat coefficient index (zero-based).
    pub k: usize,
    /// Lag, one-based: 1 means one time step back.
    pub lag: usize,
    /// Source region index (zero-based).
    pub source: usize,
    /// Target region index (zero-based).
    pub target: usize,
    pub mpp: f64,
    pub strength: f64,
}

/// Posterior summaries for one group.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroupPosterior {
    pub group: usize,
    /// Marginal inclusion probabilities per coefficient.
    pub mpp: Vec<f64>,
    /// Slab means per coefficient.
    pub omega_mean: Vec<f64>,
    pub selected: Vec<SelectedEdge>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_bernoulli: Option<(f64, f64)>,
}

impl GroupPosterior {
    /// Thresholded coefficient estimate: slab mean where selected, zero
    /// elsewhere.
    pub fn omega_hat(&self, threshold: f64) -> Vec<f64> {
        self.mpp
            .iter()
            .zip(&self.omega_mean)
            .map(|(&nu, &mu)| if nu > threshold { mu } else { 0.0 })
            .collect()
    }

    pub fn selected_mask(&self, threshold: f64) -> Vec<bool> {
        self.mpp.iter().map(|&nu| nu > threshold).collect()
    }
}

/// Complete output of a fit. Serializes deterministically for a fixed
/// seed; wall time is kept out of the serialized form for that reason.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitResult {
    pub backend: String,
    pub seed: u64,
    pub threshold: f64,
    pub n_regions: usize,
    pub n_lags: usize,
    pub prior_mode_used: String,
    pub iterations: usize,
    pub converged: bool,
    pub elbo_trace: Vec<f64>,
    pub entropy_trace: Vec<f64>,
    pub groups: Vec<GroupPosterior>,
    pub config: serde_json::Value,
    #[serde(skip, default)]
    pub wall_time_secs: f64,
}

/// Engine owning the immutable workspace and the mutable state.
pub struct VbEngine {
    pub ws: FitWorkspace,
    pub state: VariationalState,
    pub seed: u64,
    sweeps_done: usize,
}

impl VbEngine {
    pub fn new(
        dataset: &StudyDataset,
        structural: Option<&StructuralPrior>,
        smoothing: Option<&SmoothingMatrix>,
        hyper: &Hyperparameters,
        seed: u64,
    ) -> Result<Self> {
        let resolved = hyper.validate(dataset.n_groups)?;
        let ws = FitWorkspace::new(dataset, structural, smoothing, resolved)?;
        let mut init_rng = rng::derive(seed, Stream::Init);
        let state = VariationalState::init(&ws, &mut init_rng);
        Ok(VbEngine {
            ws,
            state,
            seed,
            sweeps_done: 0,
        })
    }

    /// Runs one full sweep of the update steps.
    pub fn sweep(&mut self) -> Result<()> {
        updates::sweep(&self.ws, &mut self.state, self.seed, self.sweeps_done)?;
        self.sweeps_done += 1;
        Ok(())
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    pub fn compute_elbo(&self) -> Result<f64> {
        elbo::compute_elbo(&self.ws, &self.state)
    }

    pub fn elbo_breakdown(&self) -> Result<elbo::ElboBreakdown> {
        elbo::elbo_breakdown(&self.ws, &self.state)
    }

    pub fn selection_entropy(&self) -> f64 {
        elbo::selection_entropy(&self.state)
    }

    /// Runs sweeps until the ELBO change drops below the tolerance or the
    /// iteration cap is reached, then assembles the result. On numerical
    /// failure the engine still holds the last good state; the error
    /// message carries the sweep index and last ELBO.
    pub fn run(&mut self) -> Result<FitResult> {
        let start = std::time::Instant::now();
        let mut elbo_trace = Vec::new();
        let mut entropy_trace = Vec::new();
        let mut converged = false;
        for _ in 0..self.ws.hyper.max_iters {
            self.sweep().map_err(|e| self.attach_context(e, &elbo_trace))?;
            let elbo = self
                .compute_elbo()
                .map_err(|e| self.attach_context(e, &elbo_trace))?;
            entropy_trace.push(self.selection_entropy());
            if let Some(&prev) = elbo_trace.last() {
                if (elbo - prev).abs() < self.ws.hyper.elbo_tolerance {
                    elbo_trace.push(elbo);
                    converged = true;
                    break;
                }
            }
            elbo_trace.push(elbo);
        }
        Ok(self.assemble(elbo_trace, entropy_trace, converged, start.elapsed().as_secs_f64()))
    }

    fn attach_context(&self, e: Error, trace: &[f64]) -> Error {
        let last = trace
            .last()
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "none".into());
        match e {
            Error::Numerical(msg) => Error::Numerical(format!(
                "{msg} (aborted at sweep {}, last good ELBO {last}; state retained)",
                self.sweeps_done
            )),
            other => other,
        }
    }

    fn assemble(
        &self,
        elbo_trace: Vec<f64>,
        entropy_trace: Vec<f64>,
        converged: bool,
        wall_time_secs: f64,
    ) -> FitResult {
        let threshold = self.ws.hyper.selection_threshold;
        let groups = (0..self.ws.n_groups)
            .map(|g| {
                let gs = &self.state.groups[g];
                let selected = gs
                    .nu
                    .iter()
                    .enumerate()
                    .filter(|(_, &nu)| nu > threshold)
                    .map(|(k, &nu)| {
                        let (lag, source, target) =
                            self.ws.index.triple(k).expect("index in range");
                        SelectedEdge {
                            k,
                            lag: lag + 1,
                            source,
                            target,
                            mpp: nu,
                            strength: gs.mu[k],
                        }
                    })
                    .collect();
                GroupPosterior {
                    group: g,
                    mpp: gs.nu.clone(),
                    omega_mean: gs.mu.clone(),
                    selected,
                    alpha1_mean: (self.ws.mode == Mode::Logit).then_some(gs.alpha1_mean),
                    alpha1_var: (self.ws.mode == Mode::Logit).then_some(gs.alpha1_var),
                    beta_bernoulli: (self.ws.mode == Mode::BetaBernoulli)
                        .then_some((gs.bb_m, gs.bb_n)),
                }
            })
            .collect();
        FitResult {
            backend: "vb".into(),
            seed: self.seed,
            threshold,
            n_regions: self.ws.n_regions,
            n_lags: self.ws.n_lags,
            prior_mode_used: match self.ws.mode {
                Mode::Logit => "logit".into(),
                Mode::BetaBernoulli => "beta_bernoulli".into(),
            },
            iterations: self.sweeps_done,
            converged,
            elbo_trace,
            entropy_trace,
            groups,
            config: serde_json::to_value(&self.ws.hyper).unwrap_or(serde_json::Value::Null),
            wall_time_secs,
        }
    }
}

/// Fits the model and returns the posterior summaries.
pub fn fit(
    dataset: &StudyDataset,
    structural: Option<&StructuralPrior>,
    smoothing: Option<&SmoothingMatrix>,
    hyper: &Hyperparameters,
    seed: u64,
) -> Result<FitResult> {
    VbEngine::new(dataset, structural, smoothing, hyper, seed)?.run()
}
