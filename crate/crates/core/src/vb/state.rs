//! Variational state and the precomputed per-subject design workspace.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::data::{build_lagged_design, SmoothingMatrix, StructuralPrior, StudyDataset};
use crate::error::{Error, Result};
use crate::hyper::{PriorMode, ResolvedHyperparameters};
use crate::index::CoefficientIndex;
use crate::pg;

/// Which inclusion prior the engine is actually running with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Logit,
    BetaBernoulli,
}

/// Immutable per-fit data: lagged designs and their Gram products, group
/// bookkeeping, structural vectors, smoothing and hyperparameters.
#[derive(Debug)]
pub struct FitWorkspace {
    pub index: CoefficientIndex,
    pub n_subjects: usize,
    pub n_regions: usize,
    pub n_lags: usize,
    pub n_groups: usize,
    /// Usable rows per subject, `T - L`.
    pub rows: usize,
    pub group_labels: Vec<usize>,
    pub group_sizes: Vec<usize>,
    pub group_members: Vec<Vec<usize>>,
    pub responses: Vec<DMatrix<f64>>,
    pub regressors: Vec<DMatrix<f64>>,
    /// `U' U` per subject.
    pub gram: Vec<DMatrix<f64>>,
    /// `X' U` per subject (row `j` is region `j`'s response against `U`).
    pub cross: Vec<DMatrix<f64>>,
    /// `||X_j||^2` per subject and region.
    pub response_sq: Vec<Vec<f64>>,
    pub structural: Option<Vec<Vec<f64>>>,
    pub smoothing: SmoothingMatrix,
    pub hyper: ResolvedHyperparameters,
    pub mode: Mode,
}

impl FitWorkspace {
    pub fn new(
        dataset: &StudyDataset,
        structural: Option<&StructuralPrior>,
        smoothing: Option<&SmoothingMatrix>,
        hyper: ResolvedHyperparameters,
    ) -> Result<Self> {
        let index = dataset.coeff_index();
        let dim = index.len();
        let mode = match hyper.prior_mode {
            PriorMode::Auto => {
                if structural.is_some() {
                    Mode::Logit
                } else {
                    Mode::BetaBernoulli
                }
            }
            PriorMode::Logit => {
                if structural.is_none() {
                    return Err(Error::validation(
                        "logit prior requested but no structural data supplied",
                    ));
                }
                Mode::Logit
            }
            PriorMode::BetaBernoulli => Mode::BetaBernoulli,
        };
        let structural = match (mode, structural) {
            (Mode::Logit, Some(p)) => {
                if p.vectors.len() != dataset.n_groups {
                    return Err(Error::validation(format!(
                        "structural prior has {} groups, dataset has {}",
                        p.vectors.len(),
                        dataset.n_groups
                    )));
                }
                for (g, v) in p.vectors.iter().enumerate() {
                    if v.len() != dim {
                        return Err(Error::validation(format!(
                            "structural vector for group {g} has length {}, expected {dim}",
                            v.len()
                        )));
                    }
                }
                Some(p.vectors.clone())
            }
            _ => None,
        };
        let smoothing = match smoothing {
            Some(s) => {
                if s.dim() != dim {
                    return Err(Error::validation(format!(
                        "smoothing matrix has dimension {}, expected {dim}",
                        s.dim()
                    )));
                }
                s.clone()
            }
            None => SmoothingMatrix::identity(dim),
        };

        let design = build_lagged_design(dataset)?;
        let n = dataset.n_subjects();
        let mut gram = Vec::with_capacity(n);
        let mut cross = Vec::with_capacity(n);
        let mut response_sq = Vec::with_capacity(n);
        for s in 0..n {
            let u = &design.regressors[s];
            let x = &design.responses[s];
            gram.push(u.transpose() * u);
            cross.push(x.transpose() * u);
            response_sq.push((0..x.ncols()).map(|j| x.column(j).norm_squared()).collect());
        }
        let group_members = (0..dataset.n_groups)
            .map(|g| dataset.group_members(g))
            .collect();
        Ok(FitWorkspace {
            index,
            n_subjects: n,
            n_regions: dataset.n_regions(),
            n_lags: dataset.n_lags,
            n_groups: dataset.n_groups,
            rows: dataset.n_time() - dataset.n_lags,
            group_labels: dataset.group_labels.clone(),
            group_sizes: dataset.group_sizes(),
            group_members,
            responses: design.responses,
            regressors: design.regressors,
            gram,
            cross,
            response_sq,
            structural,
            smoothing,
            hyper,
            mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn structural_vec(&self, g: usize) -> &[f64] {
        self.structural.as_ref().expect("logit mode has structural data")[g].as_slice()
    }
}

/// Gaussian posterior summaries for one subject's coefficient vector.
/// Dense covariance blocks are discarded after each update; everything the
/// other steps and the ELBO need is cached here.
#[derive(Debug, Clone)]
pub struct SubjectPosterior {
    pub mean: DVector<f64>,
    pub diag_cov: Vec<f64>,
    /// Per region: `tr(U'U V_j)`.
    pub tr_gram_cov: Vec<f64>,
    /// Per region: `ln det V_j`.
    pub logdet_cov: Vec<f64>,
    /// Per region: `E || X_j - U b_j ||^2`.
    pub sse_expect: Vec<f64>,
}

/// Per-group variational factors.
#[derive(Debug, Clone)]
pub struct GroupState {
    pub c1: f64,
    pub d1: f64,
    pub c0: f64,
    pub d0: f64,
    /// Slab means, variances and inclusion probabilities per coefficient.
    pub mu: Vec<f64>,
    pub s2: Vec<f64>,
    pub nu: Vec<f64>,
    pub alpha1_mean: f64,
    pub alpha1_var: f64,
    /// Polya-Gamma expectations and the tilt each was computed at.
    pub phi: Vec<f64>,
    pub phi_tilt: Vec<f64>,
    /// Beta-Bernoulli variational parameters.
    pub bb_m: f64,
    pub bb_n: f64,
    /// Per-sweep caches over group members: `sum_s mean[k]` and
    /// `sum_s (mean[k]^2 + diag_cov[k])`.
    pub sum_mean: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

/// The complete mean-field state.
#[derive(Debug, Clone)]
pub struct VariationalState {
    pub subjects: Vec<SubjectPosterior>,
    /// Noise variance factors `IG(z1, z2_j)` per region.
    pub z1: f64,
    pub z2: Vec<f64>,
    pub groups: Vec<GroupState>,
    /// Set once the first coefficient update has run; the ELBO requires it.
    pub beta_ready: bool,
}

impl VariationalState {
    /// Initializes every factor except the subject posteriors, which the
    /// first sweep fills in.
    pub fn init<R: Rng + ?Sized>(ws: &FitWorkspace, rng: &mut R) -> Self {
        let dim = ws.dim();
        let unif = Uniform::new(-0.5, 0.5);
        let mut groups = Vec::with_capacity(ws.n_groups);
        for g in 0..ws.n_groups {
            let mu: Vec<f64> = (0..dim).map(|_| unif.sample(rng)).collect();
            let (alpha1_mean, alpha1_var, phi, phi_tilt) = if ws.mode == Mode::Logit {
                let n_vec = ws.structural_vec(g);
                let n_bar = n_vec.iter().sum::<f64>() / dim as f64;
                let mean = if n_bar > 0.0 {
                    ws.hyper.init_c * ws.group_sizes[g] as f64 / n_bar
                } else {
                    ws.hyper.init_c * ws.group_sizes[g] as f64
                };
                let tilt: Vec<f64> = n_vec
                    .iter()
                    .map(|&nk| ws.hyper.alpha0[g] + mean * nk)
                    .collect();
                let phi = tilt.iter().map(|&c| pg::mean_unchecked(1.0, c)).collect();
                (mean, 10.0, phi, tilt)
            } else {
                (0.0, 1.0, vec![0.25; dim], vec![0.0; dim])
            };
            groups.push(GroupState {
                c1: 2.0,
                d1: 20.0,
                c0: 2.0,
                d0: 10.0,
                mu,
                s2: vec![10.0; dim],
                nu: vec![0.1; dim],
                alpha1_mean,
                alpha1_var,
                phi,
                phi_tilt,
                bb_m: 3.0,
                bb_n: 0.005,
                sum_mean: vec![0.0; dim],
                sum_sq: vec![0.0; dim],
            });
        }
        let empty = SubjectPosterior {
            mean: DVector::zeros(dim),
            diag_cov: vec![0.0; dim],
            tr_gram_cov: vec![0.0; ws.n_regions],
            logdet_cov: vec![0.0; ws.n_regions],
            sse_expect: vec![0.0; ws.n_regions],
        };
        VariationalState {
            subjects: vec![empty; ws.n_subjects],
            z1: 2.0,
            z2: vec![5.0; ws.n_regions],
            groups,
            beta_ready: false,
        }
    }

    /// Recomputes the per-group sums over subject posteriors; must run
    /// after every coefficient update.
    pub fn refresh_group_sums(&mut self, ws: &FitWorkspace) {
        let dim = ws.dim();
        for (g, group) in self.groups.iter_mut().enumerate() {
            group.sum_mean.iter_mut().for_each(|v| *v = 0.0);
            group.sum_sq.iter_mut().for_each(|v| *v = 0.0);
            for &s in &ws.group_members[g] {
                let subj = &self.subjects[s];
                for k in 0..dim {
                    let m = subj.mean[k];
                    group.sum_mean[k] += m;
                    group.sum_sq[k] += m * m + subj.diag_cov[k];
                }
            }
        }
    }

    /// Domain checks run every sweep in debug builds.
    pub fn debug_validate(&self) {
        if !cfg!(debug_assertions) {
            return;
        }
        debug_assert!(self.z1 > 0.0);
        for &z in &self.z2 {
            debug_assert!(z > 0.0, "z2 left its domain: {z}");
        }
        for g in &self.groups {
            debug_assert!(g.c1 > 0.0 && g.d1 > 0.0 && g.c0 > 0.0 && g.d0 > 0.0);
            debug_assert!(g.alpha1_var > 0.0);
            for k in 0..g.nu.len() {
                debug_assert!((0.0..=1.0).contains(&g.nu[k]), "nu[{k}]={}", g.nu[k]);
                debug_assert!(g.s2[k] > 0.0, "s2[{k}]={}", g.s2[k]);
            }
        }
        if self.beta_ready {
            for subj in &self.subjects {
                for &v in &subj.diag_cov {
                    debug_assert!(v > 0.0);
                }
            }
        }
    }
}
