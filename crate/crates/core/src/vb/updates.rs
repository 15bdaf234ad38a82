//! The coordinate-ascent update steps.
//!
//! Each sweep runs, in order: subject coefficient posteriors, noise
//! variances, slab/spike deviation variances, the joint slab/inclusion
//! update (random permutation over coefficients, Monte Carlo for the
//! slab-variance log-odds terms), then either the logit-slope and
//! Polya-Gamma steps or the Beta-Bernoulli step. All updates are exact
//! conjugate coordinate maximizers except the inclusion log-odds, whose
//! intractable slab-variance terms are estimated by averaging over draws
//! from the current variance factor.

use nalgebra::{Cholesky, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::pg;
use crate::sim::logistic;

use super::state::{FitWorkspace, GroupState, Mode, SubjectPosterior, VariationalState};

/// Log-odds are clamped here before the logistic; beyond this the
/// probability is 0/1 in double precision anyway.
const RHO_CLAMP: f64 = 700.0;

/// Step 1 for one subject: refit the Gaussian coefficient posterior from
/// the current noise, deviation-variance and baseline expectations. The
/// system is block-diagonal per target region, so each region solves an
/// `RL x RL` SPD system.
pub fn update_beta(ws: &FitWorkspace, state: &mut VariationalState, s: usize) -> Result<()> {
    let posterior = solve_subject(ws, state, s)?;
    state.subjects[s] = posterior;
    state.beta_ready = true;
    Ok(())
}

/// Step 1 for all subjects, parallel across subjects, then refresh the
/// per-group moment sums.
pub fn update_beta_all(ws: &FitWorkspace, state: &mut VariationalState) -> Result<()> {
    let shared = &*state;
    let posteriors: Result<Vec<SubjectPosterior>> = (0..ws.n_subjects)
        .into_par_iter()
        .map(|s| solve_subject(ws, shared, s))
        .collect();
    state.subjects = posteriors?;
    state.beta_ready = true;
    state.refresh_group_sums(ws);
    Ok(())
}

fn solve_subject(ws: &FitWorkspace, state: &VariationalState, s: usize) -> Result<SubjectPosterior> {
    let g = ws.group_labels[s];
    let group = &state.groups[g];
    let dim = ws.dim();
    let block = ws.n_regions * ws.n_lags;
    let e_inv_xi1 = group.c1 / group.d1;
    let e_inv_xi0 = group.c0 / group.d0;
    let gram = &ws.gram[s];
    let cross = &ws.cross[s];
    let u = &ws.regressors[s];
    let x = &ws.responses[s];

    let mut mean = DVector::zeros(dim);
    let mut diag_cov = vec![0.0; dim];
    let mut tr_gram_cov = vec![0.0; ws.n_regions];
    let mut logdet_cov = vec![0.0; ws.n_regions];
    let mut sse_expect = vec![0.0; ws.n_regions];

    for j in 0..ws.n_regions {
        let e_inv_zeta = state.z1 / state.z2[j];
        let offset = j * block;
        let mut precision = gram * e_inv_zeta;
        let mut rhs = DVector::zeros(block);
        for b in 0..block {
            let k = offset + b;
            let nu = group.nu[k];
            precision[(b, b)] += nu * e_inv_xi1 + (1.0 - nu) * e_inv_xi0;
            rhs[b] = e_inv_zeta * cross[(j, b)] + nu * group.mu[k] * e_inv_xi1;
        }
        let chol = Cholesky::new(precision.clone()).ok_or_else(|| {
            let diag: Vec<f64> = (0..block).map(|b| precision[(b, b)]).collect();
            let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Error::numerical(format!(
                "non-SPD coefficient system for subject {s}, region {j} \
                 (diagonal range [{lo:.3e}, {hi:.3e}], ratio {:.3e})",
                hi / lo.max(f64::MIN_POSITIVE)
            ))
        })?;
        let m_j = chol.solve(&rhs);
        let cov = chol.inverse();
        let l = chol.l_dirty();
        let mut logdet_prec = 0.0;
        for b in 0..block {
            logdet_prec += 2.0 * l[(b, b)].ln();
        }
        let mut tr = 0.0;
        for a in 0..block {
            for b in 0..block {
                tr += gram[(a, b)] * cov[(b, a)];
            }
        }
        // E||X_j - U b_j||^2 = ||X_j - U m_j||^2 + tr(U'U V_j)
        let resid = x.column(j) - u * &m_j;
        let sse = resid.norm_squared() + tr;

        for b in 0..block {
            mean[offset + b] = m_j[b];
            diag_cov[offset + b] = cov[(b, b)];
        }
        tr_gram_cov[j] = tr;
        logdet_cov[j] = -logdet_prec;
        sse_expect[j] = sse;
    }

    Ok(SubjectPosterior {
        mean,
        diag_cov,
        tr_gram_cov,
        logdet_cov,
        sse_expect,
    })
}

/// Step 2: noise variance factors, vectorized over regions.
pub fn update_zeta(ws: &FitWorkspace, state: &mut VariationalState) -> Result<()> {
    debug_assert!(state.beta_ready);
    state.z1 = ws.hyper.h1 + ws.n_subjects as f64 * ws.rows as f64 / 2.0;
    for j in 0..ws.n_regions {
        let mut acc = 0.0;
        for s in 0..ws.n_subjects {
            acc += state.subjects[s].sse_expect[j];
        }
        let z2 = ws.hyper.h2 + 0.5 * acc;
        if !(z2 > 0.0) || !z2.is_finite() {
            let dump: Vec<f64> = (0..ws.n_subjects)
                .map(|s| state.subjects[s].sse_expect[j])
                .collect();
            return Err(Error::numerical(format!(
                "noise update left its domain for region {j}: z2={z2}; \
                 per-subject expected SSE: {dump:?}"
            )));
        }
        state.z2[j] = z2;
    }
    Ok(())
}

/// Step 3: slab and spike deviation variance factors for group `g`.
pub fn update_xi(ws: &FitWorkspace, state: &mut VariationalState, g: usize) -> Result<()> {
    let members = ws.group_members[g].clone();
    let subjects = std::mem::take(&mut state.subjects);
    let result = update_xi_core(ws, &mut state.groups[g], g, &members, &subjects);
    state.subjects = subjects;
    result
}

pub(super) fn update_xi_core(
    ws: &FitWorkspace,
    group: &mut GroupState,
    g: usize,
    members: &[usize],
    subjects: &[SubjectPosterior],
) -> Result<()> {
    let dim = ws.dim();
    let s_g = members.len() as f64;
    let mut sum_nu = 0.0;
    let mut slab_quad = 0.0;
    let mut spike_quad = 0.0;
    for k in 0..dim {
        let nu = group.nu[k];
        sum_nu += nu;
        let mut dev = 0.0;
        let mut sq = 0.0;
        for &s in members {
            let m = subjects[s].mean[k];
            let v = subjects[s].diag_cov[k];
            dev += (m - group.mu[k]).powi(2) + v;
            sq += m * m + v;
        }
        slab_quad += nu * (dev + s_g * group.s2[k]);
        spike_quad += (1.0 - nu) * sq;
    }
    group.c1 = ws.hyper.a1[g] + 0.5 * s_g * sum_nu;
    group.d1 = ws.hyper.b1[g] + 0.5 * slab_quad;
    group.c0 = ws.hyper.a0[g] + 0.5 * s_g * (dim as f64 - sum_nu);
    group.d0 = ws.hyper.b0[g] + 0.5 * spike_quad;
    for (name, v) in [
        ("c1", group.c1),
        ("d1", group.d1),
        ("c0", group.c0),
        ("d0", group.d0),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::numerical(format!(
                "deviation variance update left its domain for group {g}: {name}={v}"
            )));
        }
    }
    Ok(())
}

/// Per-sample precomputation for the Monte Carlo log-odds terms, shared by
/// every coefficient with the same smoothing row sum.
struct McTerms {
    row_sum: f64,
    /// `1/xi` per draw.
    inv_xi: Vec<f64>,
    /// `1/P` per draw with `P = S_g/xi + row_sum/q`.
    inv_p: Vec<f64>,
    /// `-0.5 ln(q P / row_sum)` per draw.
    ln_term_mean: f64,
}

impl McTerms {
    fn build(samples: &[f64], s_g: f64, q: f64, row_sum: f64) -> Self {
        let mut inv_xi = Vec::with_capacity(samples.len());
        let mut inv_p = Vec::with_capacity(samples.len());
        let mut ln_sum = 0.0;
        for &xi in samples {
            let ix = 1.0 / xi;
            let p = s_g * ix + row_sum / q;
            inv_xi.push(ix);
            inv_p.push(1.0 / p);
            ln_sum += -0.5 * (q * p / row_sum).ln();
        }
        McTerms {
            row_sum,
            inv_xi,
            inv_p,
            ln_term_mean: ln_sum / samples.len() as f64,
        }
    }
}

/// Step 4: joint slab/inclusion update for group `g`, sequential over a
/// fresh random permutation of coefficients.
pub fn update_omega_gamma<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    ws: &FitWorkspace,
    state: &mut VariationalState,
    g: usize,
    perm_rng: &mut R1,
    mc_rng: &mut R2,
) -> Result<()> {
    let members = ws.group_members[g].len();
    let result = update_omega_gamma_core(ws, &mut state.groups[g], g, members, perm_rng, mc_rng);
    result
}

pub(super) fn update_omega_gamma_core<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    ws: &FitWorkspace,
    group: &mut GroupState,
    g: usize,
    group_size: usize,
    perm_rng: &mut R1,
    mc_rng: &mut R2,
) -> Result<()> {
    let dim = ws.dim();
    let s_g = group_size as f64;
    let q = ws.hyper.q;
    let e_inv_xi1 = group.c1 / group.d1;
    let e_inv_xi0 = group.c0 / group.d0;
    // -S_g/2 [ E ln xi1 - E ln xi0 ]
    let ig_log_diff = -0.5
        * s_g
        * ((group.d1.ln() - digamma(group.c1)) - (group.d0.ln() - digamma(group.c0)));

    let ig = Gamma::new(group.c1, 1.0 / group.d1)
        .map_err(|e| Error::numerical(format!("variance sampler setup: {e}")))?;
    let samples: Vec<f64> = (0..ws.hyper.mc_samples)
        .map(|_| 1.0 / ig.sample(mc_rng).max(1e-300))
        .collect();

    let mut perm: Vec<usize> = (0..dim).collect();
    for i in (1..dim).rev() {
        perm.swap(i, perm_rng.gen_range(0..=i));
    }

    let prior_bb = if ws.mode == Mode::BetaBernoulli {
        digamma(group.bb_m) - digamma(group.bb_n)
    } else {
        0.0
    };

    let mut mc_cache: Vec<McTerms> = Vec::new();
    for &k in &perm {
        let row_sum = ws.smoothing.row_sums[k];
        let neighbors = &ws.smoothing.neighbors[k];
        let mut agg_mean = 0.0;
        let mut agg_var = 0.0;
        for &k2 in neighbors {
            let e_omega = group.nu[k2] * group.mu[k2];
            agg_mean += e_omega;
            agg_var += group.nu[k2] * (group.mu[k2] * group.mu[k2] + group.s2[k2])
                - e_omega * e_omega;
        }

        let s2_new = 1.0 / (s_g * e_inv_xi1 + row_sum / q);
        let mu_new = s2_new * (e_inv_xi1 * group.sum_mean[k] + agg_mean / q);

        let prior_term = match ws.mode {
            Mode::Logit => {
                ws.hyper.alpha0[g] + group.alpha1_mean * ws.structural_vec(g)[k]
            }
            Mode::BetaBernoulli => prior_bb,
        };
        let rho_closed = prior_term + ig_log_diff
            - 0.5 * (e_inv_xi1 - e_inv_xi0) * group.sum_sq[k]
            - (agg_mean * agg_mean + agg_var) / (2.0 * q * row_sum);

        let terms = match mc_cache.iter().find(|t| t.row_sum == row_sum) {
            Some(t) => t,
            None => {
                mc_cache.push(McTerms::build(&samples, s_g, q, row_sum));
                mc_cache.last().unwrap()
            }
        };
        let w = group.sum_mean[k];
        let aq = agg_mean / q;
        let mut quad = 0.0;
        for (ix, ip) in terms.inv_xi.iter().zip(&terms.inv_p) {
            let h = w * ix + aq;
            quad += h * h * ip;
        }
        let mc_mean = terms.ln_term_mean + 0.5 * quad / samples.len() as f64;

        let rho = (rho_closed + mc_mean).clamp(-RHO_CLAMP, RHO_CLAMP);
        group.mu[k] = mu_new;
        group.s2[k] = s2_new;
        // damped step toward the coordinate maximizer; the per-coordinate
        // bound is concave with its maximum at logistic(rho), so any point
        // on the segment still ascends
        let lambda = ws.hyper.nu_damping;
        group.nu[k] = (1.0 - lambda) * group.nu[k] + lambda * logistic(rho);
    }
    Ok(())
}

/// Step 5: logit-slope factor for group `g` from the augmented conjugate
/// form.
pub fn update_alpha1(ws: &FitWorkspace, state: &mut VariationalState, g: usize) -> Result<()> {
    update_alpha1_core(ws, &mut state.groups[g], g)
}

pub(super) fn update_alpha1_core(
    ws: &FitWorkspace,
    group: &mut GroupState,
    g: usize,
) -> Result<()> {
    if ws.mode != Mode::Logit {
        return Err(Error::validation(
            "slope update requires the structural logit prior",
        ));
    }
    let n_vec = ws.structural_vec(g);
    let alpha0 = ws.hyper.alpha0[g];
    let tau2 = ws.hyper.tau2[g];
    let w = ws.hyper.w[g];
    let mut precision = 1.0 / tau2;
    let mut lin = w / tau2;
    for k in 0..ws.dim() {
        precision += group.phi[k] * n_vec[k] * n_vec[k];
        lin += (group.nu[k] - 0.5 - group.phi[k] * alpha0) * n_vec[k];
    }
    group.alpha1_var = 1.0 / precision;
    group.alpha1_mean = group.alpha1_var * lin;
    if !group.alpha1_mean.is_finite() || !(group.alpha1_var > 0.0) {
        return Err(Error::numerical(format!(
            "slope update left its domain for group {g}: mean={}, var={}",
            group.alpha1_mean, group.alpha1_var
        )));
    }
    Ok(())
}

/// Step 6: Polya-Gamma expectations for group `g` at the current slope
/// mean.
pub fn update_phi(ws: &FitWorkspace, state: &mut VariationalState, g: usize) -> Result<()> {
    update_phi_core(ws, &mut state.groups[g], g)
}

pub(super) fn update_phi_core(ws: &FitWorkspace, group: &mut GroupState, g: usize) -> Result<()> {
    if ws.mode != Mode::Logit {
        return Err(Error::validation(
            "Polya-Gamma update requires the structural logit prior",
        ));
    }
    let n_vec = ws.structural_vec(g);
    for k in 0..ws.dim() {
        let tilt = ws.hyper.alpha0[g] + group.alpha1_mean * n_vec[k];
        group.phi_tilt[k] = tilt;
        group.phi[k] = pg::mean_unchecked(1.0, tilt);
    }
    Ok(())
}

/// Step 7 (Beta-Bernoulli mode): inclusion-probability factor for group
/// `g`; replaces steps 5 and 6.
pub fn update_pi(ws: &FitWorkspace, state: &mut VariationalState, g: usize) -> Result<()> {
    update_pi_core(ws, &mut state.groups[g], g)
}

pub(super) fn update_pi_core(ws: &FitWorkspace, group: &mut GroupState, g: usize) -> Result<()> {
    if ws.mode != Mode::BetaBernoulli {
        return Err(Error::validation(
            "Beta-Bernoulli update requires the Beta-Bernoulli prior",
        ));
    }
    let sum_nu: f64 = group.nu.iter().sum();
    group.bb_m = ws.hyper.e[g] + sum_nu;
    group.bb_n = ws.hyper.f[g] + ws.dim() as f64 - sum_nu;
    Ok(())
}

/// One full sweep in the fixed step order; group steps run in parallel
/// across groups with deterministic per-group RNG streams.
pub fn sweep(ws: &FitWorkspace, state: &mut VariationalState, seed: u64, sweep_idx: usize) -> Result<()> {
    update_beta_all(ws, state)?;
    update_zeta(ws, state)?;
    let subjects = std::mem::take(&mut state.subjects);
    let members = &ws.group_members;
    let result: Result<()> = state
        .groups
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(g, group)| {
            update_xi_core(ws, group, g, &members[g], &subjects)?;
            let mut perm_rng = crate::rng::derive(
                seed,
                crate::rng::Stream::Permutation { group: g, sweep: sweep_idx },
            );
            let mut mc_rng = crate::rng::derive(
                seed,
                crate::rng::Stream::MonteCarlo { group: g, sweep: sweep_idx },
            );
            update_omega_gamma_core(
                ws,
                group,
                g,
                members[g].len(),
                &mut perm_rng,
                &mut mc_rng,
            )?;
            match ws.mode {
                Mode::Logit => {
                    // cycle the slope and its Polya-Gamma companions to
                    // their joint fixed point; a single pass leaves the
                    // slope tracking stale tilts for many sweeps
                    for _ in 0..50 {
                        let before = group.alpha1_mean;
                        update_alpha1_core(ws, group, g)?;
                        update_phi_core(ws, group, g)?;
                        if (group.alpha1_mean - before).abs()
                            < 1e-8 * (1.0 + before.abs())
                        {
                            break;
                        }
                    }
                }
                Mode::BetaBernoulli => {
                    update_pi_core(ws, group, g)?;
                }
            }
            Ok(())
        });
    state.subjects = subjects;
    result?;
    state.debug_validate();
    Ok(())
}
