//! Study data structures: the multi-subject time-series tensor, lagged
//! regression designs, structural priors and smoothing matrices.
//!
//! All types validate on construction and are immutable afterwards, so they
//! can be shared read-only across parallel workers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::index::CoefficientIndex;

/// Relative tolerance used by [`center`] to decide a column is already
/// centered. Skipping the subtraction in that case makes
/// write-then-reload round trips bit-exact.
const CENTER_SKIP_TOL: f64 = 1e-12;

/// Multi-subject BOLD-style time series with group labels.
///
/// `series[s]` is the `T x R` matrix for subject `s` (rows are time points,
/// columns regions). Group labels are zero-based, `0..n_groups`.
#[derive(Debug, Clone)]
pub struct StudyDataset {
    pub series: Vec<DMatrix<f64>>,
    pub roi_names: Vec<String>,
    pub group_labels: Vec<usize>,
    pub n_groups: usize,
    pub n_lags: usize,
}

impl StudyDataset {
    /// Builds a dataset from raw per-subject series. Centering is always
    /// applied; the model assumes centered data.
    pub fn new(
        series: Vec<DMatrix<f64>>,
        roi_names: Option<Vec<String>>,
        group_labels: Vec<usize>,
        n_groups: usize,
        n_lags: usize,
    ) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::validation("dataset needs at least one subject"));
        }
        let t = series[0].nrows();
        let r = series[0].ncols();
        if r < 2 {
            return Err(Error::validation(format!("need at least 2 regions, got {r}")));
        }
        if n_lags == 0 {
            return Err(Error::validation("lag order must be positive"));
        }
        if t <= n_lags {
            return Err(Error::validation(format!(
                "insufficient time points for lag: T={t} <= L={n_lags}"
            )));
        }
        for (s, m) in series.iter().enumerate() {
            if m.nrows() != t || m.ncols() != r {
                return Err(Error::validation(format!(
                    "subject {s} has shape {}x{}, expected {t}x{r}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if group_labels.len() != series.len() {
            return Err(Error::validation(format!(
                "{} group labels for {} subjects",
                group_labels.len(),
                series.len()
            )));
        }
        if n_groups == 0 {
            return Err(Error::validation("need at least one group"));
        }
        let mut seen = vec![false; n_groups];
        for (s, &g) in group_labels.iter().enumerate() {
            if g >= n_groups {
                return Err(Error::validation(format!(
                    "subject {s} has group label {g} outside 0..{n_groups}"
                )));
            }
            seen[g] = true;
        }
        if let Some(g) = seen.iter().position(|&b| !b) {
            return Err(Error::validation(format!("group {g} has no subjects")));
        }
        let roi_names = match roi_names {
            Some(names) => {
                if names.len() != r {
                    return Err(Error::validation(format!(
                        "{} ROI names for {r} regions",
                        names.len()
                    )));
                }
                names
            }
            None => (1..=r).map(|j| format!("ROI_{j}")).collect(),
        };
        let mut centered = series;
        for (s, m) in centered.iter_mut().enumerate() {
            center(m).map_err(|e| Error::validation(format!("subject {s}: {e}")))?;
        }
        Ok(StudyDataset {
            series: centered,
            roi_names,
            group_labels,
            n_groups,
            n_lags,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.series.len()
    }

    pub fn n_time(&self) -> usize {
        self.series[0].nrows()
    }

    pub fn n_regions(&self) -> usize {
        self.series[0].ncols()
    }

    pub fn coeff_index(&self) -> CoefficientIndex {
        CoefficientIndex::new(self.n_regions(), self.n_lags)
    }

    /// Number of subjects per group.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_groups];
        for &g in &self.group_labels {
            sizes[g] += 1;
        }
        sizes
    }

    /// Subject indices belonging to group `g`.
    pub fn group_members(&self, g: usize) -> Vec<usize> {
        self.group_labels
            .iter()
            .enumerate()
            .filter(|(_, &lbl)| lbl == g)
            .map(|(s, _)| s)
            .collect()
    }
}

/// Subtracts each column's mean in place. Columns whose mean is already
/// negligible relative to their scale are left untouched.
pub fn center(m: &mut DMatrix<f64>) -> Result<()> {
    let t = m.nrows();
    for j in 0..m.ncols() {
        let mut sum = 0.0;
        let mut max_abs: f64 = 1.0;
        for i in 0..t {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "non-finite value at time {i}, region {j}"
                )));
            }
            sum += v;
            max_abs = max_abs.max(v.abs());
        }
        let mean = sum / t as f64;
        if mean.abs() <= CENTER_SKIP_TOL * max_abs {
            continue;
        }
        for i in 0..t {
            m[(i, j)] -= mean;
        }
    }
    Ok(())
}

/// Per-subject lagged regression design: responses `X` of shape
/// `(T-L) x R` and regressors `U` of shape `(T-L) x (R*L)` with row `t`
/// equal to the concatenation `[x_{t-1}', ..., x_{t-L}']`.
#[derive(Debug, Clone)]
pub struct LaggedDesign {
    pub responses: Vec<DMatrix<f64>>,
    pub regressors: Vec<DMatrix<f64>>,
}

/// Builds the lagged design for every subject of a centered dataset.
pub fn build_lagged_design(dataset: &StudyDataset) -> Result<LaggedDesign> {
    let t = dataset.n_time();
    let r = dataset.n_regions();
    let l = dataset.n_lags;
    if t <= l {
        return Err(Error::validation(format!(
            "insufficient time points for lag: T={t} <= L={l}"
        )));
    }
    let rows = t - l;
    let mut responses = Vec::with_capacity(dataset.n_subjects());
    let mut regressors = Vec::with_capacity(dataset.n_subjects());
    for series in &dataset.series {
        let mut x = DMatrix::zeros(rows, r);
        let mut u = DMatrix::zeros(rows, r * l);
        for row in 0..rows {
            let time = row + l;
            for j in 0..r {
                x[(row, j)] = series[(time, j)];
            }
            for lag in 0..l {
                for i in 0..r {
                    u[(row, lag * r + i)] = series[(time - 1 - lag, i)];
                }
            }
        }
        responses.push(x);
        regressors.push(u);
    }
    Ok(LaggedDesign {
        responses,
        regressors,
    })
}

/// External per-edge connectivity strengths (one vector of length `L*R^2`
/// per group), e.g. fractional anisotropy from diffusion imaging.
#[derive(Debug, Clone)]
pub struct StructuralPrior {
    pub vectors: Vec<Vec<f64>>,
}

impl StructuralPrior {
    pub fn new(vectors: Vec<Vec<f64>>, expected_len: usize) -> Result<Self> {
        for (g, v) in vectors.iter().enumerate() {
            if v.len() != expected_len {
                return Err(Error::validation(format!(
                    "structural vector for group {g} has length {}, expected {expected_len}",
                    v.len()
                )));
            }
            for (k, &x) in v.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::validation(format!(
                        "structural vector for group {g} has invalid entry {x} at index {k}"
                    )));
                }
            }
        }
        Ok(StructuralPrior { vectors })
    }

    /// Mean of the group-`g` structural vector across all entries.
    pub fn mean(&self, g: usize) -> f64 {
        let v = &self.vectors[g];
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Symmetric binary adjacency over coefficients used by the ICAR slab.
/// Stored sparsely as per-row neighbor lists; every row includes at least
/// itself, so the ICAR denominators never vanish.
#[derive(Debug, Clone)]
pub struct SmoothingMatrix {
    pub neighbors: Vec<Vec<usize>>,
    pub row_sums: Vec<f64>,
}

impl SmoothingMatrix {
    /// Identity smoothing: each coefficient is its own sole neighbor
    /// (the "no prior knowledge" default).
    pub fn identity(dim: usize) -> Self {
        SmoothingMatrix {
            neighbors: (0..dim).map(|k| vec![k]).collect(),
            row_sums: vec![1.0; dim],
        }
    }

    /// From a dense 0/1 matrix; must be symmetric with nonzero row sums.
    pub fn from_dense(s: &DMatrix<f64>) -> Result<Self> {
        let dim = s.nrows();
        if s.ncols() != dim {
            return Err(Error::validation(format!(
                "smoothing matrix must be square, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        let mut neighbors = vec![Vec::new(); dim];
        for k in 0..dim {
            for k2 in 0..dim {
                let v = s[(k, k2)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::validation(format!(
                        "smoothing entry ({k},{k2}) is {v}, expected 0 or 1"
                    )));
                }
                if (s[(k, k2)] - s[(k2, k)]).abs() != 0.0 {
                    return Err(Error::validation(format!(
                        "smoothing matrix not symmetric at ({k},{k2})"
                    )));
                }
                if v == 1.0 {
                    neighbors[k].push(k2);
                }
            }
        }
        let row_sums: Vec<f64> = neighbors.iter().map(|n| n.len() as f64).collect();
        if let Some(k) = row_sums.iter().position(|&r| r < 1.0) {
            return Err(Error::validation(format!("smoothing row {k} has zero sum")));
        }
        Ok(SmoothingMatrix { neighbors, row_sums })
    }

    pub fn dim(&self) -> usize {
        self.neighbors.len()
    }
}
