//! Dimension-selection criteria on an eigenvalue spectrum.
//!
//! The thresholding double ridge ratio (TDRR) maps eigenvalues to
//! `s_j = lambda_j / (1 + lambda_j)`, forms ridge ratios of consecutive
//! (squared, for SDR targets) standardized eigenvalues, then ridge ratios of
//! those, and picks the largest index whose second-round ratio is at most
//! `tau`. Because the rule thresholds instead of minimizing, a dominating
//! leading eigenvalue that creates an early local minimum does not hide a
//! later one.
//!
//! The competitors are the ridge ratio (RRE), plain ratio (RE), BIC-type
//! penalized criterion and the chi-squared sequential test for SIR.
//!
//! Indices in traces and estimates are 1-based, matching the usual
//! `j = 1..p` labelling of eigenvalues.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::spectra::EigenSpectrum;

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_RE_DMAX_SDR: usize = 10;
pub const DEFAULT_ST_LEVEL: f64 = 0.05;

/// Ridges and threshold for TDRR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeSchedule {
    pub c1: f64,
    pub c2: f64,
    pub tau: f64,
}

impl RidgeSchedule {
    pub fn new(c1: f64, c2: f64, tau: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1.is_finite()) || !(c2 > 0.0 && c2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ridges must be positive and finite, got c1 = {c1}, c2 = {c2}"
            )));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold tau must lie in (0, 1), got {tau}"
            )));
        }
        Ok(Self { c1, c2, tau })
    }
}

fn log_ridge(m: f64, denom_scale: f64) -> f64 {
    m.ln() / (denom_scale * m.sqrt())
}

/// `c1 = ln n / (10 sqrt n)`, `c2 = ln n / (5 sqrt n)`, `tau = 0.5`.
pub fn default_ridges_sdr(n: usize) -> Result<RidgeSchedule> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    let m = n as f64;
    RidgeSchedule::new(log_ridge(m, 10.0), log_ridge(m, 5.0), DEFAULT_TAU)
}

/// Factor-model ridges with `m = min(n, p)`:
/// `c1 = ln m / (10 sqrt m)`, `c2 = ln m / (5 sqrt m)`, `tau = 0.5`.
pub fn default_ridges_factor(n: usize, p: usize) -> Result<RidgeSchedule> {
    let m = n.min(p);
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "need min(n, p) >= 2, got {m}"
        )));
    }
    let m = m as f64;
    RidgeSchedule::new(log_ridge(m, 10.0), log_ridge(m, 5.0), DEFAULT_TAU)
}

/// RRE ridge for SDR targets, `ln n / (10 sqrt n)`.
pub fn default_rre_ridge_sdr(n: usize) -> f64 {
    log_ridge(n as f64, 10.0)
}

/// RRE ridge for factor models, `ln n / (10 n)`.
pub fn default_rre_ridge_factor(n: usize) -> f64 {
    let n = n as f64;
    n.ln() / (10.0 * n)
}

/// BIC penalty for SDR targets, `sqrt n`.
pub fn default_bic_penalty_sdr(n: usize) -> f64 {
    (n as f64).sqrt()
}

/// BIC penalty for factor models, `ln n`.
pub fn default_bic_penalty_factor(n: usize) -> f64 {
    (n as f64).ln()
}

/// RE search bound for SDR targets: 10, capped at `p - 1`.
pub fn default_re_dmax_sdr(p: usize) -> usize {
    DEFAULT_RE_DMAX_SDR.min(p.saturating_sub(1))
}

/// RE search bound for factor models: `min(p, n) / 2`, capped at `p - 1`.
pub fn default_re_dmax_factor(n: usize, p: usize) -> usize {
    (n.min(p) / 2).min(p.saturating_sub(1))
}

/// Criterion tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "TDRR")]
    Tdrr,
    #[serde(rename = "RRE")]
    Rre,
    #[serde(rename = "RE")]
    Re,
    #[serde(rename = "BIC")]
    Bic,
    #[serde(rename = "ST")]
    Sequential,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Tdrr,
        Criterion::Rre,
        Criterion::Re,
        Criterion::Bic,
        Criterion::Sequential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Tdrr => "TDRR",
            Criterion::Rre => "RRE",
            Criterion::Re => "RE",
            Criterion::Bic => "BIC",
            Criterion::Sequential => "ST",
        }
    }

    /// Parses a comma-separated list such as `tdrr,rre,re,bic`.
    pub fn parse_list(s: &str) -> Result<Vec<Criterion>> {
        let list = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        if list.is_empty() {
            return Err(Error::InvalidArgument("method list is empty".into()));
        }
        Ok(list)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tdrr" => Ok(Criterion::Tdrr),
            "rre" => Ok(Criterion::Rre),
            "re" => Ok(Criterion::Re),
            "bic" => Ok(Criterion::Bic),
            "st" | "sequential" => Ok(Criterion::Sequential),
            other => Err(Error::InvalidArgument(format!(
                "unknown method `{other}` (expected tdrr, rre, re, bic or st)"
            ))),
        }
    }
}

/// Both rounds of TDRR ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTrace {
    /// `s_j = lambda_j / (1 + lambda_j)`, `j = 1..p`.
    pub standardized: Vec<f64>,
    /// First-round ridge ratios minus one, `j = 1..p-1`.
    pub first_round: Vec<f64>,
    /// Second-round ridge ratios, `j = 1..p-2`.
    pub second_round: Vec<f64>,
    /// 1-based indices whose second-round ratio is at most `tau`.
    pub qualifying: Vec<usize>,
}

/// Diagnostics carried alongside a selected dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trace {
    Tdrr(RatioTrace),
    /// RRE or RE ratios, index `j` at position `j - 1`.
    Ratios(Vec<f64>),
    /// BIC criterion values `G(j)`, `j = 1..p`.
    Bic(Vec<f64>),
    /// Sequential test statistics `T_k` and their critical values, `k = 0..`.
    Sequential {
        statistics: Vec<f64>,
        critical: Vec<f64>,
    },
}

impl Trace {
    /// Plot-ready `(round, index, value)` triples.
    pub fn rows(&self) -> Vec<(&'static str, usize, f64)> {
        let tag = |round: &'static str, v: &[f64], base: usize| {
            v.iter()
                .enumerate()
                .map(move |(i, x)| (round, i + base, *x))
                .collect::<Vec<_>>()
        };
        match self {
            Trace::Tdrr(t) => {
                let mut out = tag("standardized", &t.standardized, 1);
                out.extend(tag("first", &t.first_round, 1));
                out.extend(tag("second", &t.second_round, 1));
                out
            }
            Trace::Ratios(v) => tag("ratio", v, 1),
            Trace::Bic(v) => tag("criterion", v, 1),
            Trace::Sequential {
                statistics,
                critical,
            } => {
                let mut out = tag("statistic", statistics, 0);
                out.extend(tag("critical", critical, 0));
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub q_hat: usize,
    pub method: Criterion,
    pub trace: Trace,
    /// TDRR only: no second-round ratio fell below `tau`, so `q_hat = 0`.
    pub empty_qualifying: bool,
}

impl DimensionEstimate {
    fn simple(q_hat: usize, method: Criterion, trace: Trace) -> Self {
        Self {
            q_hat,
            method,
            trace,
            empty_qualifying: false,
        }
    }
}

/// Whether the SDR variant (squared standardized eigenvalues) or the factor
/// variant (plain standardized eigenvalues) feeds the first round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdrrVariant {
    Sdr,
    Factor,
}

pub fn standardized_eigenvalues(spec: &EigenSpectrum) -> Vec<f64> {
    spec.values().iter().map(|l| l / (l + 1.0)).collect()
}

pub fn tdrr(spec: &EigenSpectrum, sched: &RidgeSchedule, variant: TdrrVariant) -> Result<DimensionEstimate> {
    let p = spec.p();
    if p < 3 {
        return Err(Error::DimensionTooSmall {
            criterion: "TDRR",
            min: 3,
            p,
        });
    }
    let s = standardized_eigenvalues(spec);
    let a: Vec<f64> = match variant {
        TdrrVariant::Sdr => s.iter().map(|v| v * v).collect(),
        TdrrVariant::Factor => s.clone(),
    };
    let first_round: Vec<f64> = a
        .windows(2)
        .map(|w| (w[0] + sched.c1) / (w[1] + sched.c1) - 1.0)
        .collect();
    let mut second_round = Vec::with_capacity(p - 2);
    for (j, w) in first_round.windows(2).enumerate() {
        let denom = w[0] + sched.c2;
        if denom <= 0.0 {
            return Err(Error::Invariant(format!(
                "first-round ratio {} at j = {} makes the second-round denominator nonpositive",
                w[0],
                j + 1
            )));
        }
        second_round.push((w[1] + sched.c2) / denom);
    }
    let qualifying: Vec<usize> = second_round
        .iter()
        .enumerate()
        .filter(|(_, r)| **r <= sched.tau)
        .map(|(j, _)| j + 1)
        .collect();
    let q_hat = qualifying.last().copied().unwrap_or(0);
    Ok(DimensionEstimate {
        q_hat,
        method: Criterion::Tdrr,
        empty_qualifying: qualifying.is_empty(),
        trace: Trace::Tdrr(RatioTrace {
            standardized: s,
            first_round,
            second_round,
            qualifying,
        }),
    })
}

/// TDRR on squared standardized eigenvalues (SDR targets).
pub fn tdrr_sdr(spec: &EigenSpectrum, sched: &RidgeSchedule) -> Result<DimensionEstimate> {
    tdrr(spec, sched, TdrrVariant::Sdr)
}

/// TDRR on standardized eigenvalues (factor models); `sched.c1` is the
/// first-round ridge and `sched.c2` the second.
pub fn tdrr_factor(spec: &EigenSpectrum, sched: &RidgeSchedule) -> Result<DimensionEstimate> {
    tdrr(spec, sched, TdrrVariant::Factor)
}

/// Smallest index attaining the minimum of `v` (1-based).
fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best + 1
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best + 1
}

/// Ridge ratio estimator: argmin over `j = 1..p-1` of
/// `(lambda_{j+1} + c) / (lambda_j + c)`.
pub fn rre(spec: &EigenSpectrum, c: f64) -> Result<DimensionEstimate> {
    let p = spec.p();
    if p < 2 {
        return Err(Error::DimensionTooSmall {
            criterion: "RRE",
            min: 2,
            p,
        });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "RRE ridge must be positive, got {c}"
        )));
    }
    let ratios: Vec<f64> = spec
        .values()
        .windows(2)
        .map(|w| (w[1] + c) / (w[0] + c))
        .collect();
    Ok(DimensionEstimate::simple(
        argmin_first(&ratios),
        Criterion::Rre,
        Trace::Ratios(ratios),
    ))
}

/// `lambda_{j+1} / lambda_j` with `0/0 = 1` and `x/0 = +inf`.
fn plain_ratio(next: f64, cur: f64) -> f64 {
    if cur == 0.0 {
        if next == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        next / cur
    }
}

/// Ratio estimator: argmin over `j = 1..d_max` of `lambda_{j+1} / lambda_j`.
pub fn re(spec: &EigenSpectrum, d_max: usize) -> Result<DimensionEstimate> {
    let p = spec.p();
    if d_max < 1 {
        return Err(Error::InvalidArgument("RE needs d_max >= 1".into()));
    }
    if d_max > p.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!(
            "RE needs d_max <= p - 1 = {}, got {d_max}",
            p.saturating_sub(1)
        )));
    }
    let v = spec.values();
    let ratios: Vec<f64> = (0..d_max).map(|j| plain_ratio(v[j + 1], v[j])).collect();
    Ok(DimensionEstimate::simple(
        argmin_first(&ratios),
        Criterion::Re,
        Trace::Ratios(ratios),
    ))
}

/// Which extremum of the BIC-type criterion selects the dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BicOrientation {
    #[default]
    Maximize,
    Minimize,
}

/// BIC-type criterion values
/// `G(j) = n sum_{l<=j} g_l / (2 sum_{l<=p} g_l) - alpha * j(j+1)/p` with
/// `g_l = ln(1 + lambda_l) + lambda_l`, for `j = 1..p`. An all-zero spectrum
/// contributes a zero reward.
pub fn bic_values(spec: &EigenSpectrum, alpha: f64) -> Vec<f64> {
    let n = spec.n() as f64;
    let p = spec.p() as f64;
    let g: Vec<f64> = spec.values().iter().map(|l| l.ln_1p() + l).collect();
    let total: f64 = g.iter().sum();
    let mut partial = 0.0;
    g.iter()
        .enumerate()
        .map(|(i, gl)| {
            partial += gl;
            let j = (i + 1) as f64;
            let reward = if total > 0.0 {
                n * partial / (2.0 * total)
            } else {
                0.0
            };
            reward - alpha * j * (j + 1.0) / p
        })
        .collect()
}

pub fn bic(spec: &EigenSpectrum, alpha: f64) -> Result<DimensionEstimate> {
    bic_oriented(spec, alpha, BicOrientation::Maximize)
}

pub fn bic_oriented(
    spec: &EigenSpectrum,
    alpha: f64,
    orientation: BicOrientation,
) -> Result<DimensionEstimate> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "BIC penalty must be positive, got {alpha}"
        )));
    }
    let values = bic_values(spec, alpha);
    let q_hat = match orientation {
        BicOrientation::Maximize => argmax_first(&values),
        BicOrientation::Minimize => argmin_first(&values),
    };
    Ok(DimensionEstimate::simple(q_hat, Criterion::Bic, Trace::Bic(values)))
}

/// Sequential chi-squared test for SIR: `T_k = n sum_{j>k} lambda_j`
/// against the upper `level` quantile of chi-squared with
/// `(p-k)(H-k-1)` degrees of freedom. Returns the first `k` that is not
/// rejected, capped at `p - 1`.
pub fn sequential_test(spec: &EigenSpectrum, slices: usize, level: f64) -> Result<DimensionEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test level must lie in (0, 1), got {level}"
        )));
    }
    let p = spec.p();
    let n = spec.n() as f64;
    let v = spec.values();
    let mut statistics = Vec::new();
    let mut critical = Vec::new();
    let mut q_hat = p.saturating_sub(1);
    for k in 0..p.saturating_sub(1) {
        if slices <= k + 1 {
            q_hat = k;
            break;
        }
        let df = ((p - k) * (slices - k - 1)) as f64;
        let chi = ChiSquared::new(df)
            .map_err(|e| Error::InvalidArgument(format!("chi-squared with df {df}: {e}")))?;
        let crit = chi.inverse_cdf(1.0 - level);
        let stat = n * v[k..].iter().sum::<f64>();
        statistics.push(stat);
        critical.push(crit);
        if stat < crit {
            q_hat = k;
            break;
        }
    }
    Ok(DimensionEstimate::simple(
        q_hat,
        Criterion::Sequential,
        Trace::Sequential {
            statistics,
            critical,
        },
    ))
}

/// Per-criterion tuning. `None` means "use the context default".
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub tau: Option<f64>,
    pub rre_c: Option<f64>,
    pub alpha_n: Option<f64>,
    pub d_max: Option<usize>,
    pub level: Option<f64>,
}

/// Where a spectrum came from; selects the default constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumContext {
    /// SDR target; `slices` is only used by the sequential test.
    Sdr { slices: Option<usize> },
    /// Factor-model Gram spectrum with `n` observations.
    Factor,
}

/// The TDRR schedule after applying overrides to the context default.
pub fn resolved_schedule(spec: &EigenSpectrum, ctx: SpectrumContext, o: &Overrides) -> Result<RidgeSchedule> {
    let base = match ctx {
        SpectrumContext::Sdr { .. } => default_ridges_sdr(spec.n())?,
        SpectrumContext::Factor => default_ridges_factor(spec.n(), spec.p())?,
    };
    RidgeSchedule::new(
        o.c1.unwrap_or(base.c1),
        o.c2.unwrap_or(base.c2),
        o.tau.unwrap_or(base.tau),
    )
}

/// Runs one criterion with the defaults for `ctx`, adjusted by `o`.
pub fn apply(
    method: Criterion,
    spec: &EigenSpectrum,
    ctx: SpectrumContext,
    o: &Overrides,
) -> Result<DimensionEstimate> {
    let n = spec.n();
    let p = spec.p();
    match (method, ctx) {
        (Criterion::Tdrr, SpectrumContext::Sdr { .. }) => {
            tdrr_sdr(spec, &resolved_schedule(spec, ctx, o)?)
        }
        (Criterion::Tdrr, SpectrumContext::Factor) => {
            tdrr_factor(spec, &resolved_schedule(spec, ctx, o)?)
        }
        (Criterion::Rre, SpectrumContext::Sdr { .. }) => {
            rre(spec, o.rre_c.unwrap_or_else(|| default_rre_ridge_sdr(n)))
        }
        (Criterion::Rre, SpectrumContext::Factor) => {
            rre(spec, o.rre_c.unwrap_or_else(|| default_rre_ridge_factor(n)))
        }
        (Criterion::Re, SpectrumContext::Sdr { .. }) => {
            re(spec, o.d_max.unwrap_or_else(|| default_re_dmax_sdr(p)))
        }
        (Criterion::Re, SpectrumContext::Factor) => {
            re(spec, o.d_max.unwrap_or_else(|| default_re_dmax_factor(n, p)))
        }
        (Criterion::Bic, SpectrumContext::Sdr { .. }) => {
            bic(spec, o.alpha_n.unwrap_or_else(|| default_bic_penalty_sdr(n)))
        }
        (Criterion::Bic, SpectrumContext::Factor) => {
            bic(spec, o.alpha_n.unwrap_or_else(|| default_bic_penalty_factor(n)))
        }
        (Criterion::Sequential, SpectrumContext::Sdr { slices: Some(h) }) => {
            sequential_test(spec, h, o.level.unwrap_or(DEFAULT_ST_LEVEL))
        }
        (Criterion::Sequential, _) => Err(Error::InvalidArgument(
            "the sequential test applies only to SIR spectra with a slice count".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const CARS: [f64; 8] = [1.4019, 0.2177, 0.1322, 0.0451, 0.0213, 0.0048, 0.0034, 0.0016];

    fn spec(v: &[f64], n: usize) -> EigenSpectrum {
        EigenSpectrum::new(v.to_vec(), n).unwrap()
    }

    fn ratios(e: &DimensionEstimate) -> &[f64] {
        match &e.trace {
            Trace::Ratios(r) => r,
            _ => panic!("expected ratio trace"),
        }
    }

    #[test]
    fn sdr_ridges() {
        let r = default_ridges_sdr(400).unwrap();
        assert_abs_diff_eq!(r.c1, 0.029957, epsilon = 1e-6);
        assert_abs_diff_eq!(r.c2, 0.059915, epsilon = 1e-6);
        assert_eq!(r.tau, 0.5);
        assert_abs_diff_eq!(default_ridges_sdr(392).unwrap().c1, 0.0301594, epsilon = 1e-6);
        let r7 = default_ridges_sdr(7).unwrap();
        assert_eq!(r7.c1, 7f64.ln() / (10.0 * 7f64.sqrt()));
        assert!(default_ridges_sdr(1).is_err());
    }

    #[test]
    fn factor_ridges() {
        let r = default_ridges_factor(50, 100).unwrap();
        assert_abs_diff_eq!(r.c1, 0.0553244, epsilon = 1e-6);
        assert_eq!(default_ridges_factor(80, 80).unwrap(), default_ridges_sdr(80).unwrap());
        let r = default_ridges_factor(100, 300).unwrap();
        assert_abs_diff_eq!(r.c2, 2.0 * r.c1, epsilon = 1e-15);
    }

    #[test]
    fn schedule_validation() {
        assert!(RidgeSchedule::new(0.0, 0.1, 0.5).is_err());
        assert!(RidgeSchedule::new(0.1, 0.1, 1.0).is_err());
        assert!(RidgeSchedule::new(0.1, 0.1, 0.0).is_err());
    }

    #[test]
    fn tdrr_cars_spectrum() {
        let s = spec(&CARS, 392);
        let e = tdrr_sdr(&s, &default_ridges_sdr(392).unwrap()).unwrap();
        assert_eq!(e.q_hat, 3);
        assert!(!e.empty_qualifying);
    }

    #[test]
    fn tdrr_zero_spectrum() {
        let s = spec(&[0.0; 6], 100);
        let e = tdrr_sdr(&s, &default_ridges_sdr(100).unwrap()).unwrap();
        assert_eq!(e.q_hat, 0);
        assert!(e.empty_qualifying);
        let Trace::Tdrr(t) = &e.trace else { panic!() };
        assert!(t.second_round.iter().all(|r| *r == 1.0));
    }

    #[test]
    fn tdrr_hand_example() {
        let s = spec(&[4.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 100);
        let sched = RidgeSchedule::new(0.001, 0.002, 0.5).unwrap();
        let e = tdrr_sdr(&s, &sched).unwrap();
        let Trace::Tdrr(t) = &e.trace else { panic!() };
        assert_eq!(t.first_round.len(), 7);
        assert_eq!(t.second_round.len(), 6);
        assert_abs_diff_eq!(t.first_round[0], 0.4390, epsilon = 1e-4);
        assert_abs_diff_eq!(t.first_round[1], 0.7747, epsilon = 1e-4);
        assert_abs_diff_eq!(t.first_round[2], 250.0, epsilon = 1e-9);
        assert!(t.first_round[3..].iter().all(|v| *v == 0.0));
        assert_abs_diff_eq!(t.second_round[2], 8.0e-6, epsilon = 1e-7);
        assert!(t.second_round[3..].iter().all(|v| *v == 1.0));
        assert_eq!(e.q_hat, 3);
    }

    #[test]
    fn tdrr_needs_three_eigenvalues() {
        let s = spec(&[1.0, 0.5], 50);
        let err = tdrr_sdr(&s, &default_ridges_sdr(50).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DimensionTooSmall { min: 3, p: 2, .. }));
    }

    #[test]
    fn tdrr_factor_small_example() {
        let mut v = vec![3.0, 1e-3, 5e-4, 2e-4, 1e-4];
        v.resize(10, 0.0);
        let sched = RidgeSchedule::new(0.01, 0.01, 0.5).unwrap();
        let e = tdrr_factor(&spec(&v, 100), &sched).unwrap();
        assert_eq!(e.q_hat, 1);
    }

    #[test]
    fn tdrr_factor_flat_spectrum() {
        let sched = RidgeSchedule::new(0.01, 0.02, 0.5).unwrap();
        let e = tdrr_factor(&spec(&[2.0; 7], 100), &sched).unwrap();
        let Trace::Tdrr(t) = &e.trace else { panic!() };
        assert!(t.first_round.iter().all(|v| *v == 0.0));
        assert!(t.second_round.iter().all(|v| *v == 1.0));
        assert_eq!(e.q_hat, 0);
    }

    #[test]
    fn rre_cars() {
        let s = spec(&CARS, 392);
        let e = rre(&s, default_rre_ridge_sdr(392)).unwrap();
        let r = ratios(&e);
        assert_abs_diff_eq!(r[0], 0.173, epsilon = 1e-3);
        assert_abs_diff_eq!(r[1], 0.655, epsilon = 1e-3);
        assert_abs_diff_eq!(r[2], 0.464, epsilon = 1e-3);
        assert_eq!(e.q_hat, 1);
    }

    #[test]
    fn rre_ties_take_smallest() {
        let e = rre(&spec(&[1.0; 5], 10), 0.1).unwrap();
        assert_eq!(e.q_hat, 1);
    }

    #[test]
    fn rre_gap() {
        let e = rre(&spec(&[4.0, 2.0, 1.0, 0.0, 0.0, 0.0], 10), 0.001).unwrap();
        assert_eq!(e.q_hat, 3);
    }

    #[test]
    fn re_cars() {
        let s = spec(&CARS, 392);
        let e = re(&s, default_re_dmax_sdr(8)).unwrap();
        let expected = [0.155, 0.607, 0.341, 0.472, 0.225, 0.708, 0.471];
        for (a, b) in ratios(&e).iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-3);
        }
        assert_eq!(e.q_hat, 1);
    }

    #[test]
    fn re_examples() {
        let e = re(&spec(&[8.0, 4.0, 4.0, 4.0], 10), 3).unwrap();
        assert_eq!(ratios(&e), &[0.5, 1.0, 1.0]);
        assert_eq!(e.q_hat, 1);
        let e = re(&spec(&[4.0, 2.0, 1.0, 0.0], 10), 3).unwrap();
        assert_eq!(ratios(&e)[2], 0.0);
        assert_eq!(e.q_hat, 3);
        let e = re(&spec(&[1.0, 0.0, 0.0], 10), 2).unwrap();
        assert_eq!(ratios(&e), &[0.0, 1.0]);
        assert!(re(&spec(&[1.0, 0.5], 10), 0).is_err());
        assert!(re(&spec(&[1.0, 0.5], 10), 2).is_err());
    }

    #[test]
    fn bic_closed_form() {
        let s = spec(&[1.0, 0.0, 0.0, 0.0, 0.0], 100);
        let e = bic(&s, 10.0).unwrap();
        let Trace::Bic(g) = &e.trace else { panic!() };
        assert_abs_diff_eq!(g[0], 46.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 50.0 - 10.0 * 6.0 / 5.0, epsilon = 1e-12);
        assert_eq!(e.q_hat, 1);
    }

    #[test]
    fn bic_flat_spectrum_scan() {
        let s = spec(&[0.3; 10], 200);
        let alpha = 6.0;
        let e = bic(&s, alpha).unwrap();
        // reward 200 * j / 20 = 10 j; penalty 6 j (j+1) / 10
        let scan: Vec<f64> = (1..=10).map(|j| 10.0 * j as f64 - 0.6 * (j * (j + 1)) as f64).collect();
        let best = scan
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > scan[b] { i } else { b });
        assert_eq!(e.q_hat, best + 1);
        assert_eq!(e.q_hat, 8);
    }

    #[test]
    fn bic_zero_spectrum_selects_one() {
        let e = bic(&spec(&[0.0; 4], 50), 3.0).unwrap();
        assert_eq!(e.q_hat, 1);
    }

    #[test]
    fn bic_minimize_orientation() {
        let s = spec(&[1.0, 0.0, 0.0, 0.0, 0.0], 100);
        let e = bic_oriented(&s, 10.0, BicOrientation::Minimize).unwrap();
        assert_eq!(e.q_hat, 5);
    }

    #[test]
    fn sequential_zero_spectrum() {
        let e = sequential_test(&spec(&[0.0; 5], 800), 10, 0.05).unwrap();
        assert_eq!(e.q_hat, 0);
    }

    #[test]
    fn sequential_single_direction() {
        let e = sequential_test(&spec(&[0.5, 0.0, 0.0, 0.0, 0.0], 800), 10, 0.05).unwrap();
        let Trace::Sequential { statistics, critical } = &e.trace else { panic!() };
        assert_abs_diff_eq!(statistics[0], 400.0, epsilon = 1e-12);
        // chi-squared(45) upper 5% point
        assert_abs_diff_eq!(critical[0], 61.656, epsilon = 1e-2);
        assert_eq!(statistics[1], 0.0);
        assert_eq!(e.q_hat, 1);
    }

    #[test]
    fn sequential_stops_when_df_vanishes() {
        let e = sequential_test(&spec(&[5.0, 4.0, 3.0, 2.0, 1.0], 1000), 3, 0.05).unwrap();
        assert_eq!(e.q_hat, 2);
    }

    #[test]
    fn parse_methods() {
        assert_eq!(
            Criterion::parse_list("tdrr, RRE,re,bic,st").unwrap(),
            Criterion::ALL.to_vec()
        );
        assert!(Criterion::parse_list("tdrr,foo").is_err());
        assert!(Criterion::parse_list(" ").is_err());
    }

    #[test]
    fn apply_uses_context_defaults() {
        let s = spec(&CARS, 392);
        let ctx = SpectrumContext::Sdr { slices: None };
        let o = Overrides::default();
        assert_eq!(apply(Criterion::Tdrr, &s, ctx, &o).unwrap().q_hat, 3);
        assert_eq!(apply(Criterion::Rre, &s, ctx, &o).unwrap().q_hat, 1);
        assert_eq!(apply(Criterion::Re, &s, ctx, &o).unwrap().q_hat, 1);
        // G(j) = 139.1, 155.4, 156.8, 142.7, ... with alpha = sqrt(392)
        assert_eq!(apply(Criterion::Bic, &s, ctx, &o).unwrap().q_hat, 3);
        assert!(apply(Criterion::Sequential, &s, ctx, &o).is_err());
    }

    #[test]
    fn tau_monotone_on_cars() {
        let s = spec(&CARS, 392);
        let base = default_ridges_sdr(392).unwrap();
        let mut prev = 0;
        for tau in [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let q = tdrr_sdr(&s, &RidgeSchedule { tau, ..base }).unwrap().q_hat;
            assert!(q >= prev);
            prev = q;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn spectrum_strategy() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.0f64..5.0, 3..30).prop_map(|mut v| {
                v.sort_by(|a, b| b.total_cmp(a));
                v
            })
        }

        proptest! {
            #[test]
            fn standardized_nonincreasing(v in spectrum_strategy()) {
                let s = standardized_eigenvalues(&spec(&v, 100));
                prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(s.iter().all(|x| (0.0..1.0).contains(x)));
            }

            #[test]
            fn deterministic_and_bounded(v in spectrum_strategy(), n in 20usize..2000) {
                let s = spec(&v, n);
                let sched = default_ridges_sdr(n).unwrap();
                let a = tdrr_sdr(&s, &sched).unwrap();
                let b = tdrr_sdr(&s, &sched).unwrap();
                prop_assert_eq!(&a, &b);
                prop_assert!(a.q_hat <= s.p() - 2);
                let Trace::Tdrr(t) = &a.trace else { unreachable!() };
                prop_assert!(t.first_round.iter().all(|x| x.is_finite() && *x >= 0.0));
                for method in [Criterion::Rre, Criterion::Re, Criterion::Bic] {
                    let ctx = SpectrumContext::Sdr { slices: None };
                    let e = apply(method, &s, ctx, &Overrides::default()).unwrap();
                    prop_assert!(e.q_hat >= 1);
                    prop_assert_eq!(e, apply(method, &s, ctx, &Overrides::default()).unwrap());
                }
            }

            #[test]
            fn tail_second_round_is_exactly_one(head in spectrum_strategy(), zeros in 2usize..6) {
                let mut v: Vec<f64> = head.iter().map(|x| x + 0.1).collect();
                v.extend(std::iter::repeat_n(0.0, zeros));
                let s = spec(&v, 100);
                let e = tdrr_sdr(&s, &default_ridges_sdr(100).unwrap()).unwrap();
                let Trace::Tdrr(t) = &e.trace else { unreachable!() };
                for j in 0..t.second_round.len() {
                    if t.first_round[j] == 0.0 && t.first_round[j + 1] == 0.0 {
                        prop_assert_eq!(t.second_round[j], 1.0);
                    }
                }
            }
        }
    }
}
