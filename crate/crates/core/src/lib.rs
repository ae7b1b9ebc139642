//! Dimensionality determination from eigenvalue spectra.
//!
//! Covers sufficient dimension reduction (SIR and the distribution-based
//! DEE-SIR kernel) and approximate factor models, the ridge-stabilised
//! two-round ratio criterion (TDRR) with the usual competitors (RRE, RE, BIC,
//! sequential chi-square test), simulation generators and a Monte Carlo
//! harness.

pub mod criteria;
pub mod error;
pub mod factor;
pub mod generators;
pub mod harness;
pub mod kernel_fit;
pub mod sdr;
pub mod spectra;

pub use nalgebra;

pub use criteria::{
    apply, bic, re, rre, sequential_test, standardized_eigenvalues, tdrr, tdrr_factor, tdrr_sdr,
    Criterion, DimensionEstimate, Overrides, RatioTrace, RidgeSchedule, SpectrumContext, Trace,
    TdrrVariant,
};
pub use error::{Error, Result};
pub use factor::{estimate_num_factors, factor_spectrum, PanelMatrix};
pub use generators::{gen_factor, gen_sdr, FactorModelSpec, SdrExample, SdrModelSpec, Seed};
pub use harness::{parse_config, run_experiment, ExperimentConfig, FrequencyReport};
pub use sdr::{estimate_target, SdrMethod, SdrTarget};
pub use spectra::{DataMatrix, EigenSpectrum, ResponseVector, SymmetricMatrix};
