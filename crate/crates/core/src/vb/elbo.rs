//! Evidence lower bound for the mean-field state.
//!
//! The bound is assembled term by term over the factorization: Gaussian
//! likelihood, coefficient prior and entropy, the joint slab/inclusion
//! block (the spike branch of the slab cancels against its entropy up to
//! the neighbor-variance correction), the inclusion prior through the
//! Polya-Gamma augmented bound (or the Beta-Bernoulli block), and the
//! inverse-gamma noise and deviation-variance blocks. Everything is a
//! deterministic function of the state; Monte Carlo enters only the
//! log-odds update, never the bound itself.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

use super::state::{FitWorkspace, Mode, VariationalState};

const LN_2PI: f64 = 1.8378770664093453;

/// Per-term ELBO decomposition, useful when a non-finite bound needs
/// diagnosing.
#[derive(Debug, Clone)]
pub struct ElboBreakdown {
    pub likelihood: f64,
    pub coeff_prior: f64,
    pub coeff_entropy: f64,
    pub slab_block: f64,
    pub inclusion_block: f64,
    pub slope_block: f64,
    pub noise_block: f64,
    pub variance_block: f64,
}

impl ElboBreakdown {
    pub fn total(&self) -> f64 {
        self.likelihood
            + self.coeff_prior
            + self.coeff_entropy
            + self.slab_block
            + self.inclusion_block
            + self.slope_block
            + self.noise_block
            + self.variance_block
    }
}

/// Entropy of `IG(c, d)`.
fn ig_entropy(c: f64, d: f64) -> f64 {
    c + d.ln() + ln_gamma(c) - (1.0 + c) * digamma(c)
}

/// `E[ln p(x)] + H[q]` for `q = IG(c, d)` against prior `IG(a, b)`; equals
/// minus the KL divergence.
fn ig_block(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let e_ln = d.ln() - digamma(c);
    let e_inv = c / d;
    a * b.ln() - ln_gamma(a) - (a + 1.0) * e_ln - b * e_inv + ig_entropy(c, d)
}

/// Overflow-safe `ln cosh(x/2)`.
fn ln_cosh_half(x: f64) -> f64 {
    let t = 0.5 * x.abs();
    t + (-2.0 * t).exp().ln_1p() - std::f64::consts::LN_2
}

fn bernoulli_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

/// Computes the ELBO; errors with the per-term breakdown if any term is
/// non-finite.
pub fn compute_elbo(ws: &FitWorkspace, state: &VariationalState) -> Result<f64> {
    let b = elbo_breakdown(ws, state)?;
    let total = b.total();
    if !total.is_finite() {
        return Err(Error::numerical(format!("non-finite ELBO: {b:?}")));
    }
    Ok(total)
}

pub fn elbo_breakdown(ws: &FitWorkspace, state: &VariationalState) -> Result<ElboBreakdown> {
    if !state.beta_ready {
        return Err(Error::numerical(
            "ELBO requires the coefficient posteriors; run a sweep first",
        ));
    }
    let dim = ws.dim();
    let q = ws.hyper.q;
    let rows = ws.rows as f64;

    // Gaussian likelihood under q
    let mut likelihood = 0.0;
    for j in 0..ws.n_regions {
        let e_ln_zeta = state.z2[j].ln() - digamma(state.z1);
        let e_inv_zeta = state.z1 / state.z2[j];
        for s in 0..ws.n_subjects {
            likelihood += -0.5 * rows * (LN_2PI + e_ln_zeta)
                - 0.5 * e_inv_zeta * state.subjects[s].sse_expect[j];
        }
    }

    // coefficient prior: spike/slab mixture of subject deviations
    let mut coeff_prior = 0.0;
    for (g, group) in state.groups.iter().enumerate() {
        let e_ln_xi1 = group.d1.ln() - digamma(group.c1);
        let e_ln_xi0 = group.d0.ln() - digamma(group.c0);
        let e_inv_xi1 = group.c1 / group.d1;
        let e_inv_xi0 = group.c0 / group.d0;
        for &s in &ws.group_members[g] {
            let subj = &state.subjects[s];
            for k in 0..dim {
                let nu = group.nu[k];
                let m = subj.mean[k];
                let v = subj.diag_cov[k];
                let slab_quad = (m - group.mu[k]).powi(2) + v + group.s2[k];
                let spike_quad = m * m + v;
                coeff_prior += nu * (-0.5 * (LN_2PI + e_ln_xi1) - 0.5 * e_inv_xi1 * slab_quad)
                    + (1.0 - nu) * (-0.5 * (LN_2PI + e_ln_xi0) - 0.5 * e_inv_xi0 * spike_quad);
            }
        }
    }

    // coefficient entropy (block-diagonal Gaussian per subject)
    let mut coeff_entropy = 0.0;
    for s in 0..ws.n_subjects {
        coeff_entropy += 0.5 * dim as f64 * (LN_2PI + 1.0);
        for j in 0..ws.n_regions {
            coeff_entropy += 0.5 * state.subjects[s].logdet_cov[j];
        }
    }

    // joint slab/inclusion factor: ICAR slab prior with plug-in neighbor
    // moments, conditional Gaussian entropies and inclusion entropy
    let mut slab_block = 0.0;
    for group in state.groups.iter() {
        for k in 0..dim {
            let row_sum = ws.smoothing.row_sums[k];
            let mut agg_mean = 0.0;
            let mut agg_var = 0.0;
            for &k2 in &ws.smoothing.neighbors[k] {
                let e_omega = group.nu[k2] * group.mu[k2];
                agg_mean += e_omega;
                agg_var += group.nu[k2] * (group.mu[k2] * group.mu[k2] + group.s2[k2])
                    - e_omega * e_omega;
            }
            let theta = agg_mean / row_sum;
            let var_theta = agg_var / (row_sum * row_sum);
            let nu = group.nu[k];
            let prior_var = q / row_sum;
            // E[ln N(omega_k | theta, q/row_sum)] under both branches
            let quad = nu * ((group.mu[k] - theta).powi(2) + group.s2[k])
                + (1.0 - nu) * prior_var
                + var_theta;
            slab_block += -0.5 * (LN_2PI + prior_var.ln()) - 0.5 * quad / prior_var;
            // conditional entropy + inclusion entropy
            slab_block += nu * 0.5 * (LN_2PI + 1.0 + group.s2[k].ln())
                + (1.0 - nu) * 0.5 * (LN_2PI + 1.0 + prior_var.ln())
                + bernoulli_entropy(nu);
        }
    }

    // inclusion prior and, in logit mode, the slope factor
    let mut inclusion_block = 0.0;
    let mut slope_block = 0.0;
    match ws.mode {
        Mode::Logit => {
            for (g, group) in state.groups.iter().enumerate() {
                let n_vec = ws.structural_vec(g);
                let alpha0 = ws.hyper.alpha0[g];
                for k in 0..dim {
                    let psi = alpha0 + group.alpha1_mean * n_vec[k];
                    let psi_sq = psi * psi + n_vec[k] * n_vec[k] * group.alpha1_var;
                    let tilt = group.phi_tilt[k];
                    inclusion_block += (group.nu[k] - 0.5) * psi
                        - 0.5 * group.phi[k] * psi_sq
                        - std::f64::consts::LN_2
                        + 0.5 * tilt * tilt * group.phi[k]
                        - ln_cosh_half(tilt);
                }
                let tau2 = ws.hyper.tau2[g];
                let w = ws.hyper.w[g];
                slope_block += -0.5 * (LN_2PI + tau2.ln())
                    - 0.5 * ((group.alpha1_mean - w).powi(2) + group.alpha1_var) / tau2
                    + 0.5 * (LN_2PI + 1.0 + group.alpha1_var.ln());
            }
        }
        Mode::BetaBernoulli => {
            for (g, group) in state.groups.iter().enumerate() {
                let m = group.bb_m;
                let n = group.bb_n;
                let e_ln_pi = digamma(m) - digamma(m + n);
                let e_ln_1mpi = digamma(n) - digamma(m + n);
                for k in 0..dim {
                    inclusion_block +=
                        group.nu[k] * e_ln_pi + (1.0 - group.nu[k]) * e_ln_1mpi;
                }
                let e = ws.hyper.e[g];
                let f = ws.hyper.f[g];
                let ln_beta = |a: f64, b: f64| ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
                // prior cross term plus Beta entropy
                inclusion_block += (e - 1.0) * e_ln_pi + (f - 1.0) * e_ln_1mpi - ln_beta(e, f);
                inclusion_block += ln_beta(m, n) - (m - 1.0) * digamma(m) - (n - 1.0) * digamma(n)
                    + (m + n - 2.0) * digamma(m + n);
            }
        }
    }

    // noise variances
    let mut noise_block = 0.0;
    for j in 0..ws.n_regions {
        noise_block += ig_block(ws.hyper.h1, ws.hyper.h2, state.z1, state.z2[j]);
    }

    // deviation variances
    let mut variance_block = 0.0;
    for (g, group) in state.groups.iter().enumerate() {
        variance_block += ig_block(ws.hyper.a1[g], ws.hyper.b1[g], group.c1, group.d1);
        variance_block += ig_block(ws.hyper.a0[g], ws.hyper.b0[g], group.c0, group.d0);
    }

    Ok(ElboBreakdown {
        likelihood,
        coeff_prior,
        coeff_entropy,
        slab_block,
        inclusion_block,
        slope_block,
        noise_block,
        variance_block,
    })
}

/// Total inclusion entropy `sum_k H(Bernoulli(nu_k))` over all groups.
pub fn selection_entropy(state: &VariationalState) -> f64 {
    state
        .groups
        .iter()
        .map(|g| g.nu.iter().map(|&nu| bernoulli_entropy(nu)).sum::<f64>())
        .sum()
}
