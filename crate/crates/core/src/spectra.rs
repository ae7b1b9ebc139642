//! Dense-matrix primitives: sample moments, whitening and a symmetric
//! eigendecomposition that always hands back a clean descending spectrum.
//!
//! Covariances use the 1/n convention throughout (not 1/(n-1)). The SIR and
//! DEE target matrices are written in terms of population moments, and the
//! 1/n estimator is their plug-in version.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative clamp threshold for eigenvalues that are negative only through rounding.
pub const EIGEN_CLAMP_REL: f64 = 1e-12;
/// Relative ridge used when a covariance matrix is (near) singular.
pub const COV_RIDGE_REL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-10;

/// An `n x p` matrix of observations (rows) by covariates (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() < 2 {
            return Err(Error::DegenerateInput(format!(
                "need at least 2 observations, got {}",
                m.nrows()
            )));
        }
        if m.ncols() < 1 {
            return Err(Error::DegenerateInput("need at least 1 covariate".into()));
        }
        check_finite(&m)?;
        Ok(Self(m))
    }

    /// Builds from row vectors; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} entries, expected {p}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn column_means(&self) -> DVector<f64> {
        let n = self.nrows() as f64;
        DVector::from_iterator(self.ncols(), self.0.column_iter().map(|c| c.sum() / n))
    }

    /// Rows minus the column means.
    pub fn centered(&self) -> DMatrix<f64> {
        let mean = self.column_means();
        let mut c = self.0.clone();
        for (j, mut col) in c.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        c
    }
}

/// Scalar responses, one per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseVector(Vec<f64>);

impl ResponseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn check_matches(&self, x: &DataMatrix) -> Result<()> {
        if self.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} entries but the data matrix has {} rows",
                self.len(),
                x.nrows()
            )));
        }
        Ok(())
    }
}

/// A real symmetric matrix. Construction checks symmetry to within
/// `1e-10 * (1 + max|a_ij|)` and then symmetrizes exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        check_finite(&m)?;
        let scale = m.amax();
        let mut asym = 0.0f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * (1.0 + scale) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::symmetrized(m))
    }

    /// Averages `m` with its transpose without checking.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

/// Descending, nonnegative eigenvalues with the sample size they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    values: Vec<f64>,
    n: usize,
}

impl EigenSpectrum {
    /// Validates the spectrum: finite, nonnegative and exactly nonincreasing.
    pub fn new(values: Vec<f64>, n: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateInput("empty spectrum".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue {i} = {} is negative or non-finite",
                values[i]
            )));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument(format!(
                "spectrum must be nonincreasing (index {} < index {})",
                i,
                i + 1
            )));
        }
        Ok(Self { values, n })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient dimension.
    pub fn p(&self) -> usize {
        self.values.len()
    }
}

/// Eigenvalues (descending) and the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    pub fn spectrum(&self, n: usize) -> Result<EigenSpectrum> {
        EigenSpectrum::new(self.values.clone(), n)
    }
}

/// Whitened data plus the transform that produced it.
#[derive(Debug, Clone)]
pub struct Whitened {
    /// `(X - mean) * inv_sqrt`, one row per observation.
    pub data: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Symmetric inverse square root of the (possibly ridged) covariance.
    pub inv_sqrt: DMatrix<f64>,
    /// Set when the covariance was near singular and a ridge was added.
    pub regularized: bool,
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// `(1/n) * sum_i (x_i - xbar)(x_i - xbar)^T`.
pub fn sample_covariance(x: &DataMatrix) -> Result<SymmetricMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "covariance needs at least 2 rows, got {n}"
        )));
    }
    let c = x.centered();
    let cov = c.tr_mul(&c) / n as f64;
    Ok(SymmetricMatrix::symmetrized(cov))
}

/// Symmetric eigendecomposition with descending eigenvalues.
///
/// Eigenvalues in `[-1e-12 * max|lambda|, 0)` are clamped to zero; anything
/// more negative is reported as [`Error::NotPsd`].
pub fn symmetric_eigen(a: &SymmetricMatrix) -> Result<Eigen> {
    let p = a.order();
    let eig = SymmetricEigen::new(a.as_matrix().clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let scale = eig.eigenvalues.amax();
    let tol = EIGEN_CLAMP_REL * scale;
    let mut values = Vec::with_capacity(p);
    for &k in &order {
        let v = eig.eigenvalues[k];
        if v < -tol {
            return Err(Error::NotPsd {
                value: v,
                tolerance: -tol,
            });
        }
        values.push(v.max(0.0));
    }
    let vectors = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(Eigen { values, vectors })
}

/// Symmetric inverse square root `V diag(d^-1/2) V^T` of a covariance
/// matrix, adding `1e-8 * trace/p` to the diagonal when the smallest
/// eigenvalue falls below that level. Returns the root and the ridge flag.
pub fn inverse_sqrt(cov: &SymmetricMatrix) -> Result<(DMatrix<f64>, bool)> {
    let p = cov.order();
    let trace = cov.trace();
    if trace <= 0.0 || !trace.is_finite() {
        return Err(Error::DegenerateInput(
            "covariance has zero trace; every covariate is constant".into(),
        ));
    }
    let eps = COV_RIDGE_REL * trace / p as f64;
    let mut eig = symmetric_eigen(cov)?;
    let smallest = eig.values.last().copied().unwrap_or(0.0);
    let regularized = smallest < eps;
    if regularized {
        for v in eig.values.iter_mut() {
            *v += eps;
        }
    }
    let d = DVector::from_iterator(p, eig.values.iter().map(|v| 1.0 / v.sqrt()));
    let v = &eig.vectors;
    let scaled = DMatrix::from_fn(p, p, |i, j| v[(i, j)] * d[j]);
    let root = &scaled * v.transpose();
    Ok((SymmetricMatrix::symmetrized(root).0, regularized))
}

/// Whitens `x` with the symmetric inverse square root of `cov`.
pub fn standardize(x: &DataMatrix, cov: &SymmetricMatrix) -> Result<Whitened> {
    if cov.order() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {0}x{0} but data has {1} columns",
            cov.order(),
            x.ncols()
        )));
    }
    let (inv_sqrt, regularized) = inverse_sqrt(cov)?;
    let data = x.centered() * &inv_sqrt;
    Ok(Whitened {
        data,
        mean: x.column_means(),
        inv_sqrt,
        regularized,
    })
}

/// Column-wise z-scores (1/n variance). Constant columns are left centered.
pub fn zscore_columns(x: &DataMatrix) -> DataMatrix {
    let n = x.nrows() as f64;
    let mut c = x.centered();
    for mut col in c.column_iter_mut() {
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    DataMatrix(c)
}
