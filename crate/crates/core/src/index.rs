//! Flat-index algebra for the vectorized coefficient layout.
//!
//! The subject coefficient matrix `B` is `(R*L) x R`: column `j` holds every
//! coefficient feeding target region `j`, and within a column the rows are
//! ordered lag-major (`lag 1` sources `1..R`, then `lag 2`, ...). Vectorizing
//! stacks the columns, so a flat index `k` decomposes as
//! `k = target*R*L + lag*R + source` (all zero-based). Every module in the
//! crate shares this layout: structural priors, smoothing matrices, fitted
//! coefficient vectors and CSV exports.

use crate::error::{Error, Result};

/// Bijection between flat coefficient indices and `(lag, source, target)`
/// triples for a fixed network size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoefficientIndex {
    pub n_regions: usize,
    pub n_lags: usize,
}

impl CoefficientIndex {
    pub fn new(n_regions: usize, n_lags: usize) -> Self {
        CoefficientIndex { n_regions, n_lags }
    }

    /// Total number of coefficients, `L * R^2`.
    pub fn len(&self) -> usize {
        self.n_lags * self.n_regions * self.n_regions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index for `(lag, source, target)`, all zero-based.
    pub fn flat(&self, lag: usize, source: usize, target: usize) -> Result<usize> {
        if lag >= self.n_lags || source >= self.n_regions || target >= self.n_regions {
            return Err(Error::validation(format!(
                "coefficient index out of range: lag {lag}, source {source}, target {target} \
                 for R={}, L={}",
                self.n_regions, self.n_lags
            )));
        }
        Ok(target * self.n_regions * self.n_lags + lag * self.n_regions + source)
    }

    /// Inverse of [`flat`](Self::flat): `(lag, source, target)`.
    pub fn triple(&self, k: usize) -> Result<(usize, usize, usize)> {
        if k >= self.len() {
            return Err(Error::validation(format!(
                "flat index {k} out of range for R={}, L={}",
                self.n_regions, self.n_lags
            )));
        }
        let per_target = self.n_regions * self.n_lags;
        let target = k / per_target;
        let rem = k % per_target;
        let lag = rem / self.n_regions;
        let source = rem % self.n_regions;
        Ok((lag, source, target))
    }

    /// Flat index of entry `(source, target)` of an `R x R` matrix at lag 0,
    /// i.e. the layout used when vectorizing a single-lag structural matrix.
    pub fn flat_matrix(&self, source: usize, target: usize) -> Result<usize> {
        self.flat(0, source, target)
    }
}
