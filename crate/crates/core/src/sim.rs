//! Synthetic multi-group VAR data generation with known ground truth.
//!
//! Three stock protocols are provided: a fixed 10-region two-group setup
//! with hard-coded structural matrices, a 30-region unbalanced setup with
//! randomly generated structural matrices, and a 90-region scale-up. All
//! of them draw group edge sets from the structural logit prior, add
//! subject-level deviations with controlled eigenvalues, and forward
//! simulate stable VAR series.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{StructuralPrior, StudyDataset};
use crate::error::{Error, Result};
use crate::index::CoefficientIndex;
use crate::rng::{self, Stream};

/// How the structural connectivity matrices are produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StructuralMode {
    /// The two fixed 10x10 matrices of the two-group benchmark.
    FixedR10,
    /// Symmetric random matrix: strictly-upper entries drawn
    /// `Uniform(low, high)`, `n_weak` of them reset to `weak_value`,
    /// symmetrized, diagonal set to `min(diag + 0.5, 1)`.
    Random {
        low: f64,
        high: f64,
        n_weak: usize,
        weak_value: f64,
    },
}

/// Eigenvalue spectrum of the subject deviation matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LambdaSpec {
    Fixed(Vec<f64>),
    Uniform { low: f64, high: f64 },
}

/// Full description of one synthetic study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_regions: usize,
    pub n_time: usize,
    pub n_subjects: usize,
    pub n_groups: usize,
    pub n_lags: usize,
    pub group_sizes: Vec<usize>,
    pub structural_mode: StructuralMode,
    /// Per-group `(alpha0, alpha1)` of the edge-generating logit prior.
    pub logit_params: Vec<(f64, f64)>,
    /// Magnitude range for nonzero baseline coefficients (sign is random).
    pub omega_magnitude: (f64, f64),
    /// Couples edge magnitude to structural strength: the drawn magnitude
    /// is scaled by `(1-c) + 2*c*N_k`, so `c = 0` leaves magnitudes
    /// independent of the structural matrix.
    #[serde(default)]
    pub magnitude_coupling: f64,
    pub lambda: LambdaSpec,
    pub noise_variance: f64,
    pub stability_cap: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_sizes.len() != self.n_groups {
            return Err(Error::validation(format!(
                "{} group sizes for {} groups",
                self.group_sizes.len(),
                self.n_groups
            )));
        }
        if self.group_sizes.iter().any(|&s| s == 0) {
            return Err(Error::validation("every group needs at least one subject"));
        }
        if self.group_sizes.iter().sum::<usize>() != self.n_subjects {
            return Err(Error::validation("group sizes must sum to the subject count"));
        }
        if self.logit_params.len() != self.n_groups {
            return Err(Error::validation("need logit params per group"));
        }
        if let LambdaSpec::Uniform { low, high } = self.lambda {
            if !(-1.0 < low && low < high && high < 1.0) {
                return Err(Error::validation("lambda range must lie inside (-1, 1)"));
            }
        }
        if let LambdaSpec::Fixed(v) = &self.lambda {
            if v.len() != self.n_regions {
                return Err(Error::validation("fixed lambda needs one entry per region"));
            }
            if v.iter().any(|x| x.abs() >= 1.0) {
                return Err(Error::validation("lambda entries must lie inside (-1, 1)"));
            }
        }
        if !(self.stability_cap > 0.0 && self.stability_cap < 1.0) {
            return Err(Error::validation("stability cap must lie in (0, 1)"));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::validation("noise variance must be positive"));
        }
        let (lo, hi) = self.omega_magnitude;
        if !(0.0 < lo && lo <= hi) {
            return Err(Error::validation("omega magnitude range must be positive"));
        }
        if !(0.0..=1.0).contains(&self.magnitude_coupling) {
            return Err(Error::validation("magnitude coupling must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn coeff_index(&self) -> CoefficientIndex {
        CoefficientIndex::new(self.n_regions, self.n_lags)
    }

    /// Two-group 10-region benchmark: T=400, n=20 split 10/10, L=1.
    pub fn preset_r10(seed: u64) -> Self {
        SimulationConfig {
            n_regions: 10,
            n_time: 400,
            n_subjects: 20,
            n_groups: 2,
            n_lags: 1,
            group_sizes: vec![10, 10],
            structural_mode: StructuralMode::FixedR10,
            logit_params: vec![(-2.5, 5.0); 2],
            omega_magnitude: (0.08, 0.45),
            magnitude_coupling: 0.0,
            lambda: LambdaSpec::Fixed(vec![
                -0.4, -0.25, -0.1, 0.05, 0.2, -0.3, 0.1, 0.1, -0.3, -0.15,
            ]),
            noise_variance: 1.0,
            stability_cap: 0.95,
            burn_in: 200,
            seed,
        }
    }

    /// Unbalanced 30-region setup: T=150, n=80 split 20/60, L=1, random
    /// structural matrices with 400 of 435 upper entries weak. The logit
    /// intercept is calibrated so about 10% of edges are nonzero.
    pub fn preset_r30(seed: u64) -> Self {
        SimulationConfig {
            n_regions: 30,
            n_time: 150,
            n_subjects: 80,
            n_groups: 2,
            n_lags: 1,
            group_sizes: vec![20, 60],
            structural_mode: StructuralMode::Random {
                low: 0.3,
                high: 0.7,
                n_weak: 400,
                weak_value: 0.1,
            },
            logit_params: vec![(-3.9, 8.0); 2],
            omega_magnitude: (0.02, 0.45),
            magnitude_coupling: 0.5,
            lambda: LambdaSpec::Uniform { low: -0.4, high: 0.3 },
            noise_variance: 1.0,
            stability_cap: 0.95,
            burn_in: 200,
            seed,
        }
    }

    /// 90-region scale-up: T=150, n=100 split 50/50, L=1, weak count
    /// calibrated so about 15% of edges are nonzero.
    pub fn preset_r90(seed: u64) -> Self {
        SimulationConfig {
            n_regions: 90,
            n_time: 150,
            n_subjects: 100,
            n_groups: 2,
            n_lags: 1,
            group_sizes: vec![50, 50],
            structural_mode: StructuralMode::Random {
                low: 0.3,
                high: 0.7,
                n_weak: 3720,
                weak_value: 0.1,
            },
            logit_params: vec![(-2.5, 5.0); 2],
            omega_magnitude: (0.08, 0.45),
            magnitude_coupling: 0.0,
            lambda: LambdaSpec::Uniform { low: -0.4, high: 0.3 },
            noise_variance: 1.0,
            stability_cap: 0.95,
            burn_in: 200,
            seed,
        }
    }
}

/// Ground truth for one simulated study.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Group baseline coefficient vectors, length `L*R^2` each.
    pub omega: Vec<Vec<f64>>,
    /// Group edge indicators (`omega[k] != 0`).
    pub gamma: Vec<Vec<bool>>,
    /// Per-subject coefficient vectors.
    pub subject_coeffs: Vec<Vec<f64>>,
    /// Structural vectors fed to the logit prior.
    pub structural: StructuralPrior,
}

/// The two fixed 10x10 structural matrices of the benchmark protocol.
pub fn fixed_structural_r10() -> (DMatrix<f64>, DMatrix<f64>) {
    #[rustfmt::skip]
    let n1 = [
        0.1, 0.3, 0.1, 0.6, 0.2, 0.1, 0.7, 0.3, 0.1, 0.4,
        0.3, 0.5, 0.1, 0.1, 0.2, 0.1, 0.6, 0.1, 0.5, 0.15,
        0.1, 0.1, 0.35, 0.65, 0.2, 0.7, 0.1, 0.7, 0.2, 0.4,
        0.6, 0.1, 0.65, 0.3, 0.25, 0.1, 0.2, 0.15, 0.4, 0.3,
        0.2, 0.2, 0.2, 0.25, 0.1, 0.85, 0.3, 0.25, 0.1, 0.15,
        0.1, 0.1, 0.7, 0.1, 0.85, 0.5, 0.3, 0.1, 0.25, 0.2,
        0.7, 0.6, 0.1, 0.2, 0.3, 0.3, 0.1, 0.05, 0.12, 0.3,
        0.3, 0.1, 0.7, 0.15, 0.25, 0.1, 0.05, 0.25, 0.3, 0.15,
        0.1, 0.5, 0.2, 0.4, 0.1, 0.25, 0.12, 0.3, 0.1, 0.3,
        0.4, 0.15, 0.4, 0.3, 0.15, 0.2, 0.3, 0.15, 0.3, 0.2,
    ];
    #[rustfmt::skip]
    let n2 = [
        0.2, 0.5, 0.3, 0.1, 0.4, 0.5, 0.1, 0.2, 0.3, 0.1,
        0.5, 0.3, 0.1, 0.3, 0.1, 0.1, 0.1, 0.15, 0.05, 0.3,
        0.3, 0.1, 0.55, 0.15, 0.5, 0.5, 0.1, 0.5, 0.1, 0.4,
        0.1, 0.3, 0.15, 0.1, 0.35, 0.3, 0.6, 0.1, 0.4, 0.5,
        0.4, 0.1, 0.5, 0.35, 0.36, 0.1, 0.2, 0.1, 0.25, 0.05,
        0.5, 0.1, 0.5, 0.3, 0.1, 0.1, 0.1, 0.2, 0.5, 0.15,
        0.1, 0.1, 0.1, 0.6, 0.2, 0.1, 0.7, 0.25, 0.4, 0.2,
        0.2, 0.15, 0.5, 0.1, 0.1, 0.2, 0.25, 0.25, 0.3, 0.15,
        0.3, 0.05, 0.1, 0.4, 0.25, 0.5, 0.4, 0.3, 0.1, 0.25,
        0.1, 0.3, 0.4, 0.5, 0.05, 0.15, 0.2, 0.15, 0.25, 0.3,
    ];
    (
        DMatrix::from_row_slice(10, 10, &n1),
        DMatrix::from_row_slice(10, 10, &n2),
    )
}

/// Random symmetric structural matrix: strictly-upper entries
/// `Uniform(low, high)`, `n_weak` of them reset to `weak_value`,
/// symmetrized, diagonal clamped to `min(diag + 0.5, 1)`.
pub fn random_structural<R: Rng + ?Sized>(
    n_regions: usize,
    low: f64,
    high: f64,
    n_weak: usize,
    weak_value: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n_regions < 2 {
        return Err(Error::validation("need at least 2 regions"));
    }
    let n_upper = n_regions * (n_regions - 1) / 2;
    if n_weak > n_upper {
        return Err(Error::validation(format!(
            "requested {n_weak} weak entries but the upper triangle has only {n_upper}"
        )));
    }
    let unif = Uniform::new(low, high);
    let mut m = DMatrix::zeros(n_regions, n_regions);
    let mut upper: Vec<(usize, usize)> = Vec::with_capacity(n_upper);
    for i in 0..n_regions {
        for j in (i + 1)..n_regions {
            m[(i, j)] = unif.sample(rng);
            upper.push((i, j));
        }
    }
    // partial Fisher-Yates to pick the weak entries
    for pick in 0..n_weak {
        let swap = pick + rng.gen_range(0..(n_upper - pick));
        upper.swap(pick, swap);
        let (i, j) = upper[pick];
        m[(i, j)] = weak_value;
    }
    for i in 0..n_regions {
        for j in (i + 1)..n_regions {
            m[(j, i)] = m[(i, j)];
        }
    }
    for i in 0..n_regions {
        m[(i, i)] = (m[(i, i)] + 0.5).min(1.0);
    }
    Ok(m)
}

/// Vectorizes an `R x R` single-lag structural matrix under the shared
/// coefficient layout, tiling it across lags when `L > 1`.
pub fn vectorize_structural(m: &DMatrix<f64>, index: CoefficientIndex) -> Vec<f64> {
    let mut v = vec![0.0; index.len()];
    for k in 0..index.len() {
        let (_lag, source, target) = index.triple(k).expect("index in range");
        v[k] = m[(source, target)];
    }
    v
}

/// Subject deviation matrix `A = Q' * Lambda * Q` with `Q` orthogonal from
/// the QR decomposition of a standard-normal matrix.
pub fn subject_deviation<R: Rng + ?Sized>(lambda: &[f64], rng: &mut R) -> DMatrix<f64> {
    let r = lambda.len();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let raw = DMatrix::from_fn(r, r, |_, _| normal.sample(rng));
    let q = raw.qr().q();
    let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(lambda));
    q.transpose() * lam * q
}

/// Spectral radius of the companion matrix of a coefficient vector,
/// estimated by repeated squaring (`||A^(2^m)||^(1/2^m)`). The norm
/// factors telescope, so diagonalizable cases come out exact and
/// nilpotent companions correctly give zero; iterative eigensolvers
/// are unreliable on those.
pub fn companion_spectral_radius(coeffs: &[f64], index: CoefficientIndex) -> f64 {
    let r = index.n_regions;
    let l = index.n_lags;
    let dim = r * l;
    let mut m = DMatrix::zeros(dim, dim);
    for k in 0..index.len() {
        let (lag, source, target) = index.triple(k).expect("index in range");
        // transition block for lag: x_t[target] += coeff * x_{t-lag-1}[source]
        m[(target, lag * r + source)] = coeffs[k];
    }
    for lag in 1..l {
        for i in 0..r {
            m[(lag * r + i, (lag - 1) * r + i)] = 1.0;
        }
    }
    let mut log_rho = 0.0;
    let mut weight = 1.0;
    for _ in 0..32 {
        let norm = m.norm();
        if norm == 0.0 {
            return 0.0;
        }
        if !norm.is_finite() {
            return f64::INFINITY;
        }
        log_rho += weight * norm.ln();
        weight *= 0.5;
        m = (&m / norm) * (&m / norm);
    }
    log_rho.exp()
}

/// Rescales `coeffs` until the companion spectral radius sits strictly
/// below `cap`. Errors after 100 attempts.
fn stabilize(coeffs: &mut [f64], index: CoefficientIndex, cap: f64) -> Result<()> {
    for _ in 0..100 {
        let rho = companion_spectral_radius(coeffs, index);
        if rho < cap {
            return Ok(());
        }
        let scale = cap * 0.99 / rho;
        for c in coeffs.iter_mut() {
            *c *= scale;
        }
    }
    Err(Error::numerical(
        "stabilization failed after 100 rescale attempts",
    ))
}

/// Draws the group edge sets and baselines, then the subject coefficient
/// vectors, enforcing the stability cap everywhere.
pub fn sample_ground_truth<R: Rng + ?Sized>(
    config: &SimulationConfig,
    structural: &StructuralPrior,
    rng: &mut R,
) -> Result<GroundTruth> {
    config.validate()?;
    let index = config.coeff_index();
    let dim = index.len();
    let mag = Uniform::new_inclusive(config.omega_magnitude.0, config.omega_magnitude.1);
    let mut omega = Vec::with_capacity(config.n_groups);
    let mut gamma = Vec::with_capacity(config.n_groups);
    for g in 0..config.n_groups {
        let (alpha0, alpha1) = config.logit_params[g];
        let n_vec = &structural.vectors[g];
        let mut om = vec![0.0; dim];
        let mut ga = vec![false; dim];
        for k in 0..dim {
            let p = logistic(alpha0 + alpha1 * n_vec[k]);
            if rng.gen_bool(p) {
                ga[k] = true;
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let c = config.magnitude_coupling;
                let scale = (1.0 - c) + 2.0 * c * n_vec[k];
                om[k] = sign * mag.sample(rng) * scale;
            }
        }
        stabilize(&mut om, index, config.stability_cap)?;
        omega.push(om);
        gamma.push(ga);
    }

    let mut subject_coeffs = Vec::with_capacity(config.n_subjects);
    for (g, &size) in config.group_sizes.iter().enumerate() {
        for _ in 0..size {
            let lambda = match &config.lambda {
                LambdaSpec::Fixed(v) => v.clone(),
                LambdaSpec::Uniform { low, high } => {
                    let unif = Uniform::new(*low, *high);
                    (0..config.n_regions).map(|_| unif.sample(rng)).collect()
                }
            };
            let a = subject_deviation(&lambda, rng);
            // trace-center so the deviations have zero mean and the group
            // baseline stays the expectation of the subject coefficients
            let shift = a.trace() / config.n_regions as f64;
            let mut coeffs = omega[g].clone();
            // deviation applies to the lag-1 block
            for source in 0..config.n_regions {
                for target in 0..config.n_regions {
                    let k = index.flat(0, source, target)?;
                    coeffs[k] += a[(source, target)];
                    if source == target {
                        coeffs[k] -= shift;
                    }
                }
            }
            stabilize(&mut coeffs, index, config.stability_cap)?;
            subject_coeffs.push(coeffs);
        }
    }

    Ok(GroundTruth {
        omega,
        gamma,
        subject_coeffs,
        structural: structural.clone(),
    })
}

/// Produces the structural prior for a config, either the fixed matrices
/// or fresh random draws.
pub fn make_structural<R: Rng + ?Sized>(
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<StructuralPrior> {
    let index = config.coeff_index();
    let mut vectors = Vec::with_capacity(config.n_groups);
    match &config.structural_mode {
        StructuralMode::FixedR10 => {
            if config.n_regions != 10 || config.n_groups != 2 {
                return Err(Error::validation(
                    "fixed structural matrices require R=10 and G=2",
                ));
            }
            let (n1, n2) = fixed_structural_r10();
            vectors.push(vectorize_structural(&n1, index));
            vectors.push(vectorize_structural(&n2, index));
        }
        StructuralMode::Random {
            low,
            high,
            n_weak,
            weak_value,
        } => {
            for _ in 0..config.n_groups {
                let m = random_structural(config.n_regions, *low, *high, *n_weak, *weak_value, rng)?;
                vectors.push(vectorize_structural(&m, index));
            }
        }
    }
    StructuralPrior::new(vectors, index.len())
}

/// Forward-simulates the VAR series for every subject and returns the
/// centered dataset.
pub fn simulate_dataset<R: Rng + ?Sized>(
    config: &SimulationConfig,
    truth: &GroundTruth,
    rng: &mut R,
) -> Result<StudyDataset> {
    config.validate()?;
    let index = config.coeff_index();
    let r = config.n_regions;
    let l = config.n_lags;
    let noise = Normal::new(0.0, config.noise_variance.sqrt())
        .map_err(|e| Error::numerical(format!("noise sampler: {e}")))?;
    let mut series = Vec::with_capacity(config.n_subjects);
    let mut labels = Vec::with_capacity(config.n_subjects);
    for (g, &size) in config.group_sizes.iter().enumerate() {
        for _ in 0..size {
            labels.push(g);
        }
    }
    for coeffs in &truth.subject_coeffs {
        // transition matrices per lag, target x source
        let mut phi = vec![DMatrix::zeros(r, r); l];
        for k in 0..index.len() {
            let (lag, source, target) = index.triple(k)?;
            phi[lag][(target, source)] = coeffs[k];
        }
        let total = config.burn_in + config.n_time;
        let mut history: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(total);
        let mut out = DMatrix::zeros(config.n_time, r);
        for t in 0..total {
            let mut x = nalgebra::DVector::from_fn(r, |_, _| noise.sample(rng));
            for lag in 0..l {
                if t > lag {
                    x += &phi[lag] * &history[t - 1 - lag];
                }
            }
            if x.iter().any(|v| v.abs() > 1e6) {
                return Err(Error::numerical("unstable coefficients: series diverged"));
            }
            if t >= config.burn_in {
                let row = t - config.burn_in;
                for j in 0..r {
                    out[(row, j)] = x[j];
                }
            }
            history.push(x);
        }
        series.push(out);
    }
    StudyDataset::new(series, None, labels, config.n_groups, l)
}

/// Generates one full replicate: structural matrices, ground truth and the
/// simulated dataset, all driven by `(config.seed, replicate)`.
pub fn generate_replicate(
    config: &SimulationConfig,
    replicate: usize,
) -> Result<(StudyDataset, GroundTruth)> {
    let mut rng = rng::derive(config.seed, Stream::Simulation { replicate });
    let structural = make_structural(config, &mut rng)?;
    let truth = sample_ground_truth(config, &structural, &mut rng)?;
    let dataset = simulate_dataset(config, &truth, &mut rng)?;
    Ok((dataset, truth))
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
