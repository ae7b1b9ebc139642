//! Nadaraya-Watson fit on projected covariates, used to compare working
//! models of different dimension by their residual sum of squares.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sdr::SdrTarget;
use crate::spectra::{DataMatrix, ResponseVector};

/// Quartic (biweight) kernel `15/16 (1 - u^2)^2` on `[-1, 1]`.
pub fn quartic(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        let v = 1.0 - u * u;
        15.0 / 16.0 * v * v
    } else {
        0.0
    }
}

/// Directions and the projected sample `(X - xbar) B`.
#[derive(Debug, Clone)]
pub struct ProjectedDesign {
    pub directions: DMatrix<f64>,
    pub data: DMatrix<f64>,
}

impl ProjectedDesign {
    /// Projects onto the leading `q` directions of an SDR target.
    pub fn from_target(target: &SdrTarget, x: &DataMatrix, q: usize) -> Result<Self> {
        let directions = target.directions(q)?;
        if directions.nrows() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "target has order {} but data has {} columns",
                directions.nrows(),
                x.ncols()
            )));
        }
        let data = x.centered() * &directions;
        Ok(Self { directions, data })
    }

    /// Uses already projected coordinates directly (directions = identity).
    pub fn from_projected(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::InvalidArgument("need at least one projected coordinate".into()));
        }
        Ok(Self {
            directions: DMatrix::identity(data.ncols(), data.ncols()),
            data,
        })
    }

    pub fn q(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NwFit {
    pub fitted: Vec<f64>,
    /// Points whose kernel neighbourhood was empty and fell back to the global mean.
    pub fallback: Vec<bool>,
}

/// Product-quartic Nadaraya-Watson fit at every sample point.
///
/// With `leave_one_out` the point itself is excluded from its own average.
pub fn nw_fit(proj: &ProjectedDesign, y: &ResponseVector, h: f64, leave_one_out: bool) -> Result<NwFit> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let z = &proj.data;
    let n = z.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for {} projected points",
            y.len(),
            n
        )));
    }
    let yv = y.values();
    let global = yv.iter().sum::<f64>() / n as f64;
    let mut fitted = Vec::with_capacity(n);
    let mut fallback = Vec::with_capacity(n);
    for i in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..n {
            if leave_one_out && k == i {
                continue;
            }
            let mut w = 1.0;
            for d in 0..z.ncols() {
                w *= quartic((z[(i, d)] - z[(k, d)]) / h);
                if w == 0.0 {
                    break;
                }
            }
            num += w * yv[k];
            den += w;
        }
        if den > 0.0 {
            fitted.push(num / den);
            fallback.push(false);
        } else {
            fitted.push(global);
            fallback.push(true);
        }
    }
    Ok(NwFit { fitted, fallback })
}

/// Mean squared residual `sum (y_i - fit_i)^2 / n`.
pub fn rss(fit: &[f64], y: &[f64]) -> Result<f64> {
    if fit.len() != y.len() || y.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "fit has {} values, response has {}",
            fit.len(),
            y.len()
        )));
    }
    Ok(fit.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Rule-of-thumb bandwidth `n^{-1/(4+q)} / 4`.
pub fn bandwidth_rule(n: usize, q: usize) -> f64 {
    (n as f64).powf(-1.0 / (4.0 + q as f64)) / 4.0
}

/// Grid `l/20`. The default keeps the points strictly inside `(0.05, 1)`,
/// `l = 2..=19`; `full` gives `l = 1..=20`.
pub fn bandwidth_grid(full: bool) -> Vec<f64> {
    let range = if full { 1..=20 } else { 2..=19 };
    range.map(|l| l as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthScore {
    pub h: f64,
    /// In-sample RSS.
    pub rss: f64,
    /// Leave-one-out RSS.
    pub cv: f64,
}

/// In-sample and leave-one-out RSS at every bandwidth.
pub fn score_bandwidths(proj: &ProjectedDesign, y: &ResponseVector, grid: &[f64]) -> Result<Vec<BandwidthScore>> {
    grid.iter()
        .map(|&h| {
            let fit = nw_fit(proj, y, h, false)?;
            let loo = nw_fit(proj, y, h, true)?;
            Ok(BandwidthScore {
                h,
                rss: rss(&fit.fitted, y.values())?,
                cv: rss(&loo.fitted, y.values())?,
            })
        })
        .collect()
}

/// Entry with the smallest value of `key` (first on ties).
pub fn best_by(scores: &[BandwidthScore], key: impl Fn(&BandwidthScore) -> f64) -> Option<&BandwidthScore> {
    scores
        .iter()
        .fold(None, |best: Option<&BandwidthScore>, s| match best {
            Some(b) if key(b) <= key(s) => Some(b),
            _ => Some(s),
        })
}
