//! Target-matrix estimates for sufficient dimension reduction.
//!
//! Two estimators are provided: sliced inverse regression with `H` equal-count
//! slices, and the SIR-based discretization-expectation estimator that
//! averages the two-slice SIR matrices of the indicators `1{y <= t}` over
//! every observed `t`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{
    inverse_sqrt, sample_covariance, standardize, symmetric_eigen, DataMatrix, Eigen,
    EigenSpectrum, ResponseVector, SymmetricMatrix,
};

pub const DEFAULT_SLICES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdrMethod {
    Sir { slices: usize },
    DeeSir,
}

impl fmt::Display for SdrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SdrMethod::Sir { slices } => write!(f, "SIR(H={slices})"),
            SdrMethod::DeeSir => f.write_str("DEE-SIR"),
        }
    }
}

/// An estimated target matrix with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct SdrTarget {
    pub matrix: SymmetricMatrix,
    pub eigen: Eigen,
    pub spectrum: EigenSpectrum,
    pub method: SdrMethod,
    /// `Sigma^{-1/2}` used for whitening; maps eigenvectors back to the X scale.
    pub inv_sqrt: DMatrix<f64>,
    /// True when the covariate covariance needed a ridge to be inverted.
    pub regularized: bool,
}

impl SdrTarget {
    fn from_matrix(
        matrix: SymmetricMatrix,
        method: SdrMethod,
        n: usize,
        inv_sqrt: DMatrix<f64>,
        regularized: bool,
    ) -> Result<Self> {
        let eigen = symmetric_eigen(&matrix)?;
        let spectrum = eigen.spectrum(n)?;
        Ok(Self {
            matrix,
            eigen,
            spectrum,
            method,
            inv_sqrt,
            regularized,
        })
    }

    /// Leading `q` directions on the original covariate scale,
    /// `Sigma^{-1/2} * alpha_k`, each scaled to unit length.
    pub fn directions(&self, q: usize) -> Result<DMatrix<f64>> {
        let p = self.spectrum.p();
        if q == 0 || q > p {
            return Err(Error::InvalidArgument(format!(
                "direction count must be in 1..={p}, got {q}"
            )));
        }
        let mut b = &self.inv_sqrt * self.eigen.vectors.columns(0, q);
        for mut col in b.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        Ok(b)
    }
}

/// Equal-count slices over the response order statistics.
///
/// Rows are ordered by a stable sort on `(y, original index)`; the first
/// `n mod H` slices receive one extra row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlicePlan {
    /// Row indices in slice order.
    pub order: Vec<usize>,
    /// Rows per slice.
    pub counts: Vec<usize>,
    /// Positions in `order` where slices 2..=H begin.
    pub boundaries: Vec<usize>,
}

impl SlicePlan {
    pub fn new(y: &[f64], slices: usize) -> Result<Self> {
        let n = y.len();
        if slices < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 slices, got {slices}"
            )));
        }
        if n < 2 * slices {
            return Err(Error::TooManySlices {
                slices,
                n,
                needed: 2 * slices,
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        let base = n / slices;
        let extra = n % slices;
        let counts: Vec<usize> = (0..slices).map(|k| base + usize::from(k < extra)).collect();
        let boundaries = counts
            .iter()
            .scan(0, |acc, c| {
                *acc += c;
                Some(*acc)
            })
            .take(slices - 1)
            .collect();
        Ok(Self {
            order,
            counts,
            boundaries,
        })
    }

    pub fn slices(&self) -> usize {
        self.counts.len()
    }

    /// Row indices of each slice.
    pub fn groups(&self) -> impl Iterator<Item = &[usize]> {
        let mut start = 0;
        self.counts.iter().map(move |&c| {
            let g = &self.order[start..start + c];
            start += c;
            g
        })
    }
}

/// `sum_k (n_k/n) zbar_k zbar_k^T` for already whitened rows `z`.
pub fn slice_mean_matrix(z: &DMatrix<f64>, plan: &SlicePlan) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    let p = z.ncols();
    let mut m = DMatrix::zeros(p, p);
    for group in plan.groups() {
        let nk = group.len() as f64;
        let mut mean = nalgebra::DVector::zeros(p);
        for &i in group {
            mean += z.row(i).transpose();
        }
        mean /= nk;
        m += (nk / n) * &mean * mean.transpose();
    }
    m
}

/// Sliced inverse regression target with `slices` equal-count slices.
pub fn sir_matrix(x: &DataMatrix, y: &ResponseVector, slices: usize) -> Result<SdrTarget> {
    y.check_matches(x)?;
    let plan = SlicePlan::new(y.values(), slices)?;
    let cov = sample_covariance(x)?;
    let w = standardize(x, &cov)?;
    let m = SymmetricMatrix::symmetrized(slice_mean_matrix(&w.data, &plan));
    SdrTarget::from_matrix(
        m,
        SdrMethod::Sir { slices },
        x.nrows(),
        w.inv_sqrt,
        w.regularized,
    )
}

/// Rows `m_n(y_j)^T` for `j = 1..n`, where
/// `m_n(t) = n^{-1} sum_i c_i 1{y_i <= t}` and `c` are the given centered rows.
///
/// Evaluated with prefix sums over the sorted responses; tied responses
/// share the sum up to the end of their tie group.
pub fn cumulative_moments(c: &DMatrix<f64>, y: &[f64]) -> DMatrix<f64> {
    let n = c.nrows();
    let p = c.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut out = DMatrix::zeros(n, p);
    let mut running = vec![0.0; p];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && y[order[end]] == y[order[start]] {
            let row = order[end];
            for (k, r) in running.iter_mut().enumerate() {
                *r += c[(row, k)];
            }
            end += 1;
        }
        for &row in &order[start..end] {
            for (k, r) in running.iter().enumerate() {
                out[(row, k)] = r / n as f64;
            }
        }
        start = end;
    }
    out
}

/// SIR-based DEE target.
///
/// Forms `Lbar = n^{-1} sum_j m_n(y_j) m_n(y_j)^T` on the centered raw
/// covariates and returns `Sigma^{-1/2} Lbar Sigma^{-1/2}`, which has the same
/// eigenvalues as `Sigma^{-1} Lbar` but is symmetric PSD by construction.
pub fn dee_sir_matrix(x: &DataMatrix, y: &ResponseVector) -> Result<SdrTarget> {
    y.check_matches(x)?;
    let n = x.nrows();
    let cov = sample_covariance(x)?;
    let (inv_sqrt, regularized) = inverse_sqrt(&cov)?;
    let moments = cumulative_moments(&x.centered(), y.values());
    // B = Sigma^{-1/2} * moments^T / sqrt(n); target = B B^T
    let b = (&inv_sqrt * moments.transpose()) / (n as f64).sqrt();
    let m = SymmetricMatrix::symmetrized(&b * b.transpose());
    SdrTarget::from_matrix(m, SdrMethod::DeeSir, n, inv_sqrt, regularized)
}

/// Dispatches on `method`.
pub fn estimate_target(x: &DataMatrix, y: &ResponseVector, method: SdrMethod) -> Result<SdrTarget> {
    match method {
        SdrMethod::Sir { slices } => sir_matrix(x, y, slices),
        SdrMethod::DeeSir => dee_sir_matrix(x, y),
    }
}
