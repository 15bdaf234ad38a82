//! Desk-scale Gibbs sampler for the same model, used as a correctness
//! oracle for the variational engine on small instances.
//!
//! Full conditionals follow from conjugacy: Gaussian coefficient blocks,
//! inverse-gamma variances, a joint spike/slab draw with the slab variable
//! integrated out of the inclusion odds, and (in logit mode) Polya-Gamma
//! augmented slope updates. A Geweke diagnostic compares early- and
//! late-chain window means on a log-joint trace and a handful of baseline
//! coefficient traces.

use nalgebra::{Cholesky, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pg;
use crate::rng::{self, Stream};
use crate::sim::logistic;
use crate::vb::state::{FitWorkspace, Mode};
use crate::vb::{FitResult, GroupPosterior, SelectedEdge};

/// Largest `L*R^2` the oracle accepts.
pub const SIZE_GUARD: usize = 400;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iters: 40_000,
            burn_in: 10_000,
            thin: 1,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iters {
            return Err(Error::validation("burn-in must be smaller than the iteration count"));
        }
        if self.thin == 0 {
            return Err(Error::validation("thinning interval must be at least 1"));
        }
        Ok(())
    }
}

/// Current draw of every model parameter.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub beta: Vec<DVector<f64>>,
    pub zeta: Vec<f64>,
    pub xi1: Vec<f64>,
    pub xi0: Vec<f64>,
    /// Effective baseline `gamma_k * slab value` per group.
    pub omega: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<bool>>,
    pub alpha1: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    /// Residual sums per region, refreshed by the noise step each sweep.
    resid_sq: Vec<f64>,
}

impl GibbsState {
    pub fn init(ws: &FitWorkspace) -> Self {
        let dim = ws.dim();
        GibbsState {
            beta: vec![DVector::zeros(dim); ws.n_subjects],
            zeta: vec![1.0; ws.n_regions],
            xi1: vec![1.0; ws.n_groups],
            xi0: vec![1.0; ws.n_groups],
            omega: vec![vec![0.0; dim]; ws.n_groups],
            gamma: vec![vec![false; dim]; ws.n_groups],
            alpha1: ws.hyper.w.clone(),
            phi: vec![vec![0.25; dim]; ws.n_groups],
            pi: (0..ws.n_groups)
                .map(|g| ws.hyper.e[g] / (ws.hyper.e[g] + ws.hyper.f[g]))
                .collect(),
            resid_sq: vec![0.0; ws.n_regions],
        }
    }
}

fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::numerical(format!("inverse-gamma setup ({shape}, {scale}): {e}")))?;
    Ok(1.0 / g.sample(rng).max(1e-300))
}

/// One full-conditional sweep over every parameter block.
///
/// The inclusion step is partially collapsed: both the slab variable and
/// the group's subject coefficients for the flipped coordinate are
/// integrated out of the odds and redrawn jointly afterwards. Conditioning
/// the flip on the current coefficients would make the spike essentially
/// unreachable whenever it is much tighter than the coefficient posterior.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    ws: &FitWorkspace,
    state: &mut GibbsState,
    rng: &mut R,
) -> Result<()> {
    let dim = ws.dim();
    let block = ws.n_regions * ws.n_lags;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    // coefficient blocks, one subject and target region at a time
    for s in 0..ws.n_subjects {
        let g = ws.group_labels[s];
        for j in 0..ws.n_regions {
            let offset = j * block;
            let inv_zeta = 1.0 / state.zeta[j];
            let mut precision = &ws.gram[s] * inv_zeta;
            let mut rhs = DVector::zeros(block);
            for b in 0..block {
                let k = offset + b;
                let inv_sigma = if state.gamma[g][k] {
                    1.0 / state.xi1[g]
                } else {
                    1.0 / state.xi0[g]
                };
                precision[(b, b)] += inv_sigma;
                rhs[b] = inv_zeta * ws.cross[s][(j, b)] + state.omega[g][k] * inv_sigma;
            }
            let chol = Cholesky::new(precision).ok_or_else(|| {
                Error::numerical(format!(
                    "non-SPD coefficient conditional for subject {s}, region {j}"
                ))
            })?;
            let mean = chol.solve(&rhs);
            let z = DVector::from_fn(block, |_, _| std_normal.sample(rng));
            let noise = chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::numerical("triangular solve failed in coefficient draw"))?;
            for b in 0..block {
                state.beta[s][offset + b] = mean[b] + noise[b];
            }
        }
    }

    // per-subject, per-region residuals at the current coefficients,
    // kept in sync through the inclusion step below
    let mut resid: Vec<Vec<DVector<f64>>> = Vec::with_capacity(ws.n_subjects);
    for s in 0..ws.n_subjects {
        let mut per_region = Vec::with_capacity(ws.n_regions);
        for j in 0..ws.n_regions {
            let b_j = state.beta[s].rows(j * block, block);
            per_region.push(ws.responses[s].column(j) - &ws.regressors[s] * b_j);
        }
        resid.push(per_region);
    }

    // noise variances from the residuals
    for j in 0..ws.n_regions {
        let mut acc = 0.0;
        for s in 0..ws.n_subjects {
            acc += resid[s][j].norm_squared();
        }
        state.resid_sq[j] = acc;
        state.zeta[j] = draw_inverse_gamma(
            ws.hyper.h1 + ws.n_subjects as f64 * ws.rows as f64 / 2.0,
            ws.hyper.h2 + 0.5 * acc,
            rng,
        )?;
    }

    // deviation variances per group
    for g in 0..ws.n_groups {
        let mut n1 = 0usize;
        let mut q1 = 0.0;
        let mut q0 = 0.0;
        for k in 0..dim {
            if state.gamma[g][k] {
                n1 += 1;
                for &s in &ws.group_members[g] {
                    q1 += (state.beta[s][k] - state.omega[g][k]).powi(2);
                }
            } else {
                for &s in &ws.group_members[g] {
                    q0 += state.beta[s][k].powi(2);
                }
            }
        }
        let s_g = ws.group_members[g].len() as f64;
        state.xi1[g] = draw_inverse_gamma(
            ws.hyper.a1[g] + s_g * n1 as f64 / 2.0,
            ws.hyper.b1[g] + 0.5 * q1,
            rng,
        )?;
        state.xi0[g] = draw_inverse_gamma(
            ws.hyper.a0[g] + s_g * (dim - n1) as f64 / 2.0,
            ws.hyper.b0[g] + 0.5 * q0,
            rng,
        )?;
    }

    // joint spike/slab draws with the slab variable and the group's
    // coefficients for the coordinate collapsed out of the odds
    for g in 0..ws.n_groups {
        let q = ws.hyper.q;
        let xi1 = state.xi1[g];
        let xi0 = state.xi0[g];
        let mut perm: Vec<usize> = (0..dim).collect();
        for i in (1..dim).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        for &k in &perm {
            let j = k / block;
            let col = k % block;
            let zeta = state.zeta[j];
            let row_sum = ws.smoothing.row_sums[k];
            // neighbor mean with the self term left out, so the
            // conditional is proper even under identity smoothing
            let mut agg = 0.0;
            for &k2 in &ws.smoothing.neighbors[k] {
                if k2 != k {
                    agg += state.omega[g][k2];
                }
            }
            let theta = agg / row_sum;

            // per-subject partial products with this coordinate removed
            let members = &ws.group_members[g];
            let mut uu = Vec::with_capacity(members.len());
            let mut ux = Vec::with_capacity(members.len());
            for &s in members {
                let u_col = ws.regressors[s].column(col);
                let gram_kk = ws.gram[s][(col, col)];
                let dot = u_col.dot(&resid[s][j]) + gram_kk * state.beta[s][k];
                uu.push(gram_kk);
                ux.push(dot);
            }

            // collapsed odds: integrate the coefficient per subject, then
            // the slab variable against its conditional prior
            let mut data_terms = 0.0;
            let mut p1 = row_sum / q;
            let mut h1 = theta * row_sum / q;
            for i in 0..members.len() {
                let d1 = zeta + xi1 * uu[i];
                let d0 = zeta + xi0 * uu[i];
                data_terms += -0.5 * (d1 / d0).ln()
                    + 0.5 * ux[i] * ux[i] / zeta * (xi1 / d1 - xi0 / d0);
                p1 += uu[i] / d1;
                h1 += ux[i] / d1;
            }
            let prior_odds = match ws.mode {
                Mode::Logit => {
                    ws.hyper.alpha0[g] + state.alpha1[g] * ws.structural_vec(g)[k]
                }
                Mode::BetaBernoulli => state.pi[g].ln() - (1.0 - state.pi[g]).ln(),
            };
            let rho = prior_odds + data_terms - theta * theta * row_sum / (2.0 * q)
                + h1 * h1 / (2.0 * p1)
                - 0.5 * (q * p1 / row_sum).ln();
            let p = logistic(rho.clamp(-700.0, 700.0));
            let on = rng.gen_bool(p);
            state.gamma[g][k] = on;
            let omega_new = if on {
                let draw = Normal::new(h1 / p1, (1.0 / p1).sqrt())
                    .map_err(|e| Error::numerical(format!("slab draw: {e}")))?;
                draw.sample(rng)
            } else {
                0.0
            };
            state.omega[g][k] = omega_new;
            // redraw the coordinate for every group member and patch the
            // residuals
            let (prior_var, prior_mean) = if on { (xi1, omega_new) } else { (xi0, 0.0) };
            for (i, &s) in members.iter().enumerate() {
                let prec = uu[i] / zeta + 1.0 / prior_var;
                let mean = (ux[i] / zeta + prior_mean / prior_var) / prec;
                let draw = Normal::new(mean, (1.0 / prec).sqrt())
                    .map_err(|e| Error::numerical(format!("coefficient draw: {e}")))?;
                let beta_new = draw.sample(rng);
                let delta = state.beta[s][k] - beta_new;
                if delta != 0.0 {
                    let u_col = ws.regressors[s].column(col);
                    for t in 0..ws.rows {
                        resid[s][j][t] += u_col[t] * delta;
                    }
                }
                state.beta[s][k] = beta_new;
            }
        }
    }

    match ws.mode {
        Mode::Logit => {
            for g in 0..ws.n_groups {
                let n_vec = ws.structural_vec(g);
                let alpha0 = ws.hyper.alpha0[g];
                let mut precision = 1.0 / ws.hyper.tau2[g];
                let mut lin = ws.hyper.w[g] / ws.hyper.tau2[g];
                for k in 0..dim {
                    precision += state.phi[g][k] * n_vec[k] * n_vec[k];
                    let ind = if state.gamma[g][k] { 1.0 } else { 0.0 };
                    lin += (ind - 0.5 - state.phi[g][k] * alpha0) * n_vec[k];
                }
                let draw = Normal::new(lin / precision, (1.0 / precision).sqrt())
                    .map_err(|e| Error::numerical(format!("slope draw: {e}")))?;
                state.alpha1[g] = draw.sample(rng);
                for k in 0..dim {
                    let tilt = alpha0 + state.alpha1[g] * n_vec[k];
                    state.phi[g][k] = pg::sample(1.0, tilt, pg::DEFAULT_TRUNCATION, rng)?;
                }
            }
        }
        Mode::BetaBernoulli => {
            for g in 0..ws.n_groups {
                let on = state.gamma[g].iter().filter(|&&b| b).count() as f64;
                let beta = Beta::new(ws.hyper.e[g] + on, ws.hyper.f[g] + dim as f64 - on)
                    .map_err(|e| Error::numerical(format!("inclusion draw: {e}")))?;
                state.pi[g] = beta.sample(rng).clamp(1e-12, 1.0 - 1e-12);
            }
        }
    }
    Ok(())
}

/// Unnormalized log joint at the current draw; monitored for convergence.
fn log_joint(ws: &FitWorkspace, state: &GibbsState) -> f64 {
    let dim = ws.dim();
    let rows = ws.rows as f64;
    let mut lp = 0.0;
    for j in 0..ws.n_regions {
        lp += -0.5 * ws.n_subjects as f64 * rows * state.zeta[j].ln()
            - 0.5 * state.resid_sq[j] / state.zeta[j];
        lp += -(ws.hyper.h1 + 1.0) * state.zeta[j].ln() - ws.hyper.h2 / state.zeta[j];
    }
    for g in 0..ws.n_groups {
        let s_g = ws.group_members[g].len() as f64;
        let mut n1 = 0.0;
        for k in 0..dim {
            let (var, mean) = if state.gamma[g][k] {
                n1 += 1.0;
                (state.xi1[g], state.omega[g][k])
            } else {
                (state.xi0[g], 0.0)
            };
            for &s in &ws.group_members[g] {
                lp += -0.5 * (state.beta[s][k] - mean).powi(2) / var;
            }
            let prior_p = match ws.mode {
                Mode::Logit => logistic(
                    ws.hyper.alpha0[g] + state.alpha1[g] * ws.structural_vec(g)[k],
                ),
                Mode::BetaBernoulli => state.pi[g],
            };
            lp += if state.gamma[g][k] {
                prior_p.max(1e-300).ln()
            } else {
                (1.0 - prior_p).max(1e-300).ln()
            };
        }
        lp += -0.5 * s_g * (n1 * state.xi1[g].ln() + (dim as f64 - n1) * state.xi0[g].ln());
        lp += -(ws.hyper.a1[g] + 1.0) * state.xi1[g].ln() - ws.hyper.b1[g] / state.xi1[g];
        lp += -(ws.hyper.a0[g] + 1.0) * state.xi0[g].ln() - ws.hyper.b0[g] / state.xi0[g];
    }
    lp
}

/// Geweke score for one monitored scalar chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GewekeScore {
    pub name: String,
    pub z: f64,
}

/// Spectral-density-at-zero estimate with a Bartlett window.
fn spectral_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let lag_max = (n as f64).cbrt().floor() as usize;
    let gamma0 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let mut s = gamma0;
    for lag in 1..=lag_max.min(n.saturating_sub(1)) {
        let mut acc = 0.0;
        for i in 0..n - lag {
            acc += (xs[i] - mean) * (xs[i + lag] - mean);
        }
        let w = 1.0 - lag as f64 / (lag_max + 1) as f64;
        s += 2.0 * w * acc / n as f64;
    }
    s.max(1e-300)
}

/// Geweke z: first 10% of the chain against the last 50%.
pub fn geweke_z(trace: &[f64]) -> f64 {
    let n = trace.len();
    let n_a = (n / 10).max(2);
    let n_b = (n / 2).max(2);
    let a = &trace[..n_a];
    let b = &trace[n - n_b..];
    let mean_a = a.iter().sum::<f64>() / n_a as f64;
    let mean_b = b.iter().sum::<f64>() / n_b as f64;
    let var = spectral_variance(a) / n_a as f64 + spectral_variance(b) / n_b as f64;
    (mean_a - mean_b) / var.sqrt()
}

/// Posterior summaries over the retained draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mpp: Vec<Vec<f64>>,
    pub omega_mean: Vec<Vec<f64>>,
    pub beta_mean: Vec<Vec<f64>>,
    pub zeta_mean: Vec<f64>,
    pub xi1_mean: Vec<f64>,
    pub xi0_mean: Vec<f64>,
    pub alpha1_mean: Vec<f64>,
    pub geweke: Vec<GewekeScore>,
    pub kept: usize,
}

/// Runs one chain and summarizes it. Refuses instances with more than
/// [`SIZE_GUARD`] coefficients.
pub fn run_chain(ws: &FitWorkspace, config: &ChainConfig) -> Result<PosteriorSummary> {
    config.validate()?;
    let dim = ws.dim();
    if dim > SIZE_GUARD {
        return Err(Error::validation(format!(
            "instance has {dim} coefficients, above the Gibbs oracle guard of {SIZE_GUARD}; \
             use the VB backend for problems this size"
        )));
    }
    let mut rng = rng::derive(config.seed, Stream::Chain { chain: 0 });
    let mut state = GibbsState::init(ws);

    // pick 10 baseline coefficients to monitor
    let mut monitored: Vec<(usize, usize)> = Vec::new();
    let n_monitor = 10.min(ws.n_groups * dim);
    while monitored.len() < n_monitor {
        let g = rng.gen_range(0..ws.n_groups);
        let k = rng.gen_range(0..dim);
        if !monitored.contains(&(g, k)) {
            monitored.push((g, k));
        }
    }

    let mut mpp = vec![vec![0.0; dim]; ws.n_groups];
    let mut omega_mean = vec![vec![0.0; dim]; ws.n_groups];
    let mut beta_mean = vec![vec![0.0; dim]; ws.n_subjects];
    let mut zeta_mean = vec![0.0; ws.n_regions];
    let mut xi1_mean = vec![0.0; ws.n_groups];
    let mut xi0_mean = vec![0.0; ws.n_groups];
    let mut alpha1_mean = vec![0.0; ws.n_groups];
    let mut logjoint_trace = Vec::new();
    let mut omega_traces = vec![Vec::new(); monitored.len()];
    let mut kept = 0usize;

    for iter in 0..config.n_iters {
        gibbs_sweep(ws, &mut state, &mut rng)?;
        if iter < config.burn_in || (iter - config.burn_in) % config.thin != 0 {
            continue;
        }
        kept += 1;
        for g in 0..ws.n_groups {
            for k in 0..dim {
                if state.gamma[g][k] {
                    mpp[g][k] += 1.0;
                }
                omega_mean[g][k] += state.omega[g][k];
            }
            xi1_mean[g] += state.xi1[g];
            xi0_mean[g] += state.xi0[g];
            alpha1_mean[g] += state.alpha1[g];
        }
        for s in 0..ws.n_subjects {
            for k in 0..dim {
                beta_mean[s][k] += state.beta[s][k];
            }
        }
        for j in 0..ws.n_regions {
            zeta_mean[j] += state.zeta[j];
        }
        logjoint_trace.push(log_joint(ws, &state));
        for (i, &(g, k)) in monitored.iter().enumerate() {
            omega_traces[i].push(state.omega[g][k]);
        }
    }
    let norm = kept.max(1) as f64;
    for g in 0..ws.n_groups {
        for k in 0..dim {
            mpp[g][k] /= norm;
            omega_mean[g][k] /= norm;
        }
        xi1_mean[g] /= norm;
        xi0_mean[g] /= norm;
        alpha1_mean[g] /= norm;
    }
    for row in beta_mean.iter_mut() {
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    for v in zeta_mean.iter_mut() {
        *v /= norm;
    }

    let mut geweke = vec![GewekeScore {
        name: "log_joint".into(),
        z: geweke_z(&logjoint_trace),
    }];
    for (i, &(g, k)) in monitored.iter().enumerate() {
        geweke.push(GewekeScore {
            name: format!("omega_g{g}_k{k}"),
            z: geweke_z(&omega_traces[i]),
        });
    }

    Ok(PosteriorSummary {
        mpp,
        omega_mean,
        beta_mean,
        zeta_mean,
        xi1_mean,
        xi0_mean,
        alpha1_mean,
        geweke,
        kept,
    })
}

impl PosteriorSummary {
    /// Repackages the summary in the same shape as a variational fit.
    pub fn to_fit_result(
        &self,
        ws: &FitWorkspace,
        config: &ChainConfig,
        wall_time_secs: f64,
    ) -> FitResult {
        let threshold = ws.hyper.selection_threshold;
        let groups = (0..ws.n_groups)
            .map(|g| {
                let selected = self.mpp[g]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > threshold)
                    .map(|(k, &p)| {
                        let (lag, source, target) = ws.index.triple(k).expect("index in range");
                        SelectedEdge {
                            k,
                            lag: lag + 1,
                            source,
                            target,
                            mpp: p,
                            strength: self.omega_mean[g][k],
                        }
                    })
                    .collect();
                GroupPosterior {
                    group: g,
                    mpp: self.mpp[g].clone(),
                    omega_mean: self.omega_mean[g].clone(),
                    selected,
                    alpha1_mean: (ws.mode == Mode::Logit).then_some(self.alpha1_mean[g]),
                    alpha1_var: None,
                    beta_bernoulli: None,
                }
            })
            .collect();
        let pass = self.geweke.iter().filter(|s| s.z.abs() < 2.0).count();
        FitResult {
            backend: "gibbs".into(),
            seed: config.seed,
            threshold,
            n_regions: ws.n_regions,
            n_lags: ws.n_lags,
            prior_mode_used: match ws.mode {
                Mode::Logit => "logit".into(),
                Mode::BetaBernoulli => "beta_bernoulli".into(),
            },
            iterations: config.n_iters,
            converged: pass * 10 >= self.geweke.len() * 9,
            elbo_trace: Vec::new(),
            entropy_trace: Vec::new(),
            groups,
            config: serde_json::to_value(&ws.hyper).unwrap_or(serde_json::Value::Null),
            wall_time_secs,
        }
    }
}
