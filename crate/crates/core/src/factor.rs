//! Number of common factors in an approximate factor model `Y = B F + U`.
//!
//! The spectrum is that of `Y Y^T / (n p)` for the `p x n` panel. When
//! `p > n` the `n x n` dual `Y^T Y / (n p)` is decomposed instead and padded
//! with zeros; the nonzero eigenvalues coincide.

use nalgebra::DMatrix;

use crate::criteria::{apply, Criterion, DimensionEstimate, Overrides, SpectrumContext};
use crate::error::{Error, Result};
use crate::spectra::{symmetric_eigen, EigenSpectrum, SymmetricMatrix};

/// A `p x n` panel: rows are variables, columns are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelMatrix(DMatrix<f64>);

impl PanelMatrix {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() < 3 || y.ncols() < 3 {
            return Err(Error::DegenerateInput(format!(
                "panel must be at least 3x3, got {}x{}",
                y.nrows(),
                y.ncols()
            )));
        }
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                if !y[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self(y))
    }

    /// Number of variables.
    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Subtracts each variable's mean over the observations.
    pub fn demeaned(&self) -> Self {
        let mut y = self.0.clone();
        for mut row in y.row_iter_mut() {
            let mean = row.sum() / row.len() as f64;
            row.add_scalar_mut(-mean);
        }
        Self(y)
    }
}

/// Which Gram matrix to decompose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramRoute {
    /// `p x p` when `p <= n`, else `n x n`.
    Auto,
    Primal,
    Dual,
}

pub fn factor_spectrum(y: &PanelMatrix) -> Result<EigenSpectrum> {
    factor_spectrum_via(y, GramRoute::Auto)
}

pub fn factor_spectrum_via(y: &PanelMatrix, route: GramRoute) -> Result<EigenSpectrum> {
    let (p, n) = (y.p(), y.n());
    let scale = (n * p) as f64;
    let m = y.as_matrix();
    let dual = match route {
        GramRoute::Auto => p > n,
        GramRoute::Primal => false,
        GramRoute::Dual => true,
    };
    let gram = if dual { m.tr_mul(m) } else { m * m.transpose() } / scale;
    let mut values = symmetric_eigen(&SymmetricMatrix::symmetrized(gram))?.values;
    values.resize(p, 0.0);
    EigenSpectrum::new(values, n)
}

/// Runs `method` on the panel spectrum with the factor-model defaults.
pub fn estimate_num_factors(
    y: &PanelMatrix,
    method: Criterion,
    overrides: &Overrides,
) -> Result<DimensionEstimate> {
    let spec = factor_spectrum(y)?;
    apply(method, &spec, SpectrumContext::Factor, overrides)
}
