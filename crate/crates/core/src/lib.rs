//! Two-sample inference for multivariate cross-correlation functions.
//!
//! Each recording session yields paired time series (a neural signal and a
//! locomotion signal). Per session we estimate a cross-correlation function
//! (CCF) curve on a common lag grid for each locomotion measure, treat the
//! resulting vector of curves as one multivariate functional observation,
//! and test equality of group mean curve vectors with integrated (`F_int`)
//! and maximum (`F_max`) Hotelling-type global statistics. `F_int` is
//! calibrated analytically through a Welch-Satterthwaite scaled chi-square
//! approximation, `F_max` by a within-group residual bootstrap; a
//! permutation test is available as an independent cross-check.
//!
//! Pipeline: [`ingest`] parses session CSVs and derives locomotion signals,
//! [`ccf`] estimates per-session curves, [`funcsample`] assembles grouped
//! functional samples and the pooled covariance function, [`globaltests`]
//! computes and calibrates the global statistics, [`simulate`] generates
//! synthetic data with known truth, and [`pipeline`] wires a labeled dataset
//! and a factor query into a [`pipeline::TestReport`].

pub mod ccf;
pub mod error;
pub mod funcsample;
pub mod globaltests;
pub mod grid;
pub mod ingest;
pub mod pipeline;
pub mod scenario;
pub mod seed;
pub mod simulate;

pub use ccf::{ccf_curve, cross_covariance, CcfCurve, CovDivisor};
pub use error::{Error, Result};
pub use funcsample::{
    group_mean, pooled_covariance, GroupedSample, MultiCurveSample, PooledCovFunction,
};
pub use globaltests::{
    bootstrap_fmax, f_int, f_max, hotelling_pointwise, permutation_test, ws_calibrate, ws_pvalue,
    GlobalStatistic, PointwiseCurve, Quadrature, WsCalibration,
};
pub use grid::LagGrid;
pub use pipeline::{run_comparison, ComparisonConfig, Dataset, FactorQuery, TestReport};
