//! Pointwise Hotelling statistics, global `F_int` / `F_max` aggregation,
//! and their calibration.
//!
//! `T_n(h) = (n1 n2 / n) * delta(h)^T Gamma(h, h)^{-1} delta(h)` with
//! `delta(h)` the group mean difference. `F_int` integrates `T_n` over the
//! lag domain (trapezoidal rule by default, plain Riemann behind a flag);
//! `F_max` takes the grid maximum. `F_int` is calibrated by a
//! Welch-Satterthwaite scaled chi-square fitted to the trace integrals of
//! the standardized covariance function; `F_max` by a within-group
//! residual bootstrap. A label-permutation test is available as an
//! independent cross-check for either statistic.
//!
//! Diagonal covariance blocks are ridge-regularized with
//! `1e-8 * mean(diag) * I` before inversion or square-rooting, which keeps
//! the statistic affine-invariant up to the ridge size.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcsample::{diag_cov_blocks, group_mean, mean_of, pooled_residuals};
use crate::funcsample::{GroupedSample, PooledCovFunction};
use crate::grid::LagGrid;
use crate::seed::derive_seed;

const RIDGE_EPS: f64 = 1e-8;

/// The pointwise Hotelling statistic curve, nonnegative everywhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointwiseCurve {
    pub grid: LagGrid,
    pub t_values: Vec<f64>,
}

/// Quadrature rule for lag integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    #[default]
    Trapezoid,
    Riemann,
}

/// Which global statistic a resampling test should recompute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalStatistic {
    FInt,
    FMax,
}

/// Welch-Satterthwaite parameters: `F_int`'s null law is approximated by
/// `beta * chi^2_d`, with `beta` and `d` matched to the estimated
/// asymptotic mean and variance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WsCalibration {
    pub beta: f64,
    pub d: f64,
    pub mean_hat: f64,
    pub var_hat: f64,
}

fn ridge(block: &DMatrix<f64>) -> DMatrix<f64> {
    let p = block.nrows();
    let mean_diag = block.diagonal().sum() / p as f64;
    let mut out = block.clone();
    for i in 0..p {
        out[(i, i)] += RIDGE_EPS * mean_diag;
    }
    out
}

/// `delta^T block^{-1} delta`, clamped at zero. A zero mean difference is
/// zero regardless of the metric, which also covers the fully degenerate
/// all-curves-identical case. The ridge is applied only when plain
/// inversion fails, so the statistic is exact for well-conditioned blocks.
fn quad_form_inv(block: &DMatrix<f64>, delta: &[f64], lag: f64) -> Result<f64> {
    if delta.iter().all(|d| *d == 0.0) {
        return Ok(0.0);
    }
    let inv = block
        .clone()
        .try_inverse()
        .or_else(|| ridge(block).try_inverse())
        .ok_or(Error::DegenerateCovariance(lag))?;
    let p = delta.len();
    let mut acc = 0.0;
    for a in 0..p {
        for b in 0..p {
            acc += delta[a] * inv[(a, b)] * delta[b];
        }
    }
    Ok(acc.max(0.0))
}

fn pointwise_values(
    mean1: &[Vec<f64>],
    mean2: &[Vec<f64>],
    diag: &[DMatrix<f64>],
    n1: usize,
    n2: usize,
    grid: &LagGrid,
) -> Result<Vec<f64>> {
    let factor = (n1 * n2) as f64 / (n1 + n2) as f64;
    let p = mean1.len();
    let mut delta = vec![0.0; p];
    grid.values()
        .iter()
        .enumerate()
        .map(|(h, lag)| {
            for k in 0..p {
                delta[k] = mean1[k][h] - mean2[k][h];
            }
            quad_form_inv(&diag[h], &delta, *lag).map(|q| factor * q)
        })
        .collect()
}

/// Pointwise Hotelling statistic at every grid lag.
pub fn hotelling_pointwise(g: &GroupedSample, cov: &PooledCovFunction) -> Result<PointwiseCurve> {
    let mean1 = group_mean(g.group1())?;
    let mean2 = group_mean(g.group2())?;
    let m = g.grid().len();
    let diag: Vec<DMatrix<f64>> = (0..m).map(|h| cov.block(h, h).clone()).collect();
    let t_values = pointwise_values(&mean1, &mean2, &diag, g.n1(), g.n2(), g.grid())?;
    Ok(PointwiseCurve {
        grid: g.grid().clone(),
        t_values,
    })
}

/// Pointwise statistic computed directly from borrowed curve matrices,
/// recomputing group means and diagonal pooled covariance blocks. This is
/// the fast path shared by the bootstrap and permutation loops.
fn pointwise_of(
    group1: &[&Vec<Vec<f64>>],
    group2: &[&Vec<Vec<f64>>],
    grid: &LagGrid,
) -> Result<Vec<f64>> {
    let mean1 = mean_of(group1);
    let mean2 = mean_of(group2);
    let diag = diag_cov_blocks(group1, group2);
    pointwise_values(&mean1, &mean2, &diag, group1.len(), group2.len(), grid)
}

/// Integrated global statistic.
pub fn f_int(pw: &PointwiseCurve) -> f64 {
    f_int_with(pw, Quadrature::Trapezoid)
}

pub fn f_int_with(pw: &PointwiseCurve, quad: Quadrature) -> f64 {
    integrate(&pw.t_values, &pw.grid, quad)
}

fn integrate(values: &[f64], grid: &LagGrid, quad: Quadrature) -> f64 {
    match quad {
        Quadrature::Trapezoid => grid
            .trapezoid_weights()
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum(),
        Quadrature::Riemann => values.iter().sum::<f64>() * grid.delta_h(),
    }
}

/// Maximum global statistic and the smallest lag attaining it.
pub fn f_max(pw: &PointwiseCurve) -> (f64, f64) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = pw.grid.a();
    for (v, h) in pw.t_values.iter().zip(pw.grid.values()) {
        if *v > best {
            best = *v;
            arg = *h;
        }
    }
    (best, arg)
}

fn inv_sqrt_spd(m: &DMatrix<f64>, lag: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let lam_max = eig.eigenvalues.max();
    if !lam_max.is_finite() || lam_max <= 0.0 {
        return Err(Error::CannotStandardize(lag));
    }
    let floor = RIDGE_EPS * lam_max;
    let p = m.nrows();
    let mut out = DMatrix::<f64>::zeros(p, p);
    for k in 0..p {
        let lam = eig.eigenvalues[k].max(floor);
        let w = 1.0 / lam.sqrt();
        let u = eig.eigenvectors.column(k);
        for a in 0..p {
            for b in 0..p {
                out[(a, b)] += w * u[a] * u[b];
            }
        }
    }
    Ok(out)
}

/// Fit the Welch-Satterthwaite scaled chi-square to the standardized
/// covariance function `Gamma*(s, t) = Gamma(s,s)^{-1/2} Gamma(s,t)
/// Gamma(t,t)^{-1/2}`:
/// `mean_hat = integral of tr Gamma*(h, h)`,
/// `var_hat = 2 * double integral of tr{Gamma*(s,t) Gamma*(t,s)}`,
/// both by trapezoidal quadrature; then `beta = var / (2 mean)` and
/// `d = 2 mean^2 / var`.
pub fn ws_calibrate(cov: &PooledCovFunction) -> Result<WsCalibration> {
    let grid = cov.grid();
    let m = grid.len();
    let w = grid.trapezoid_weights();

    // the eigenvalue floor inside inv_sqrt_spd handles near-singular blocks
    let roots: Vec<DMatrix<f64>> = (0..m)
        .map(|h| inv_sqrt_spd(cov.block(h, h), grid.values()[h]))
        .collect::<Result<Vec<_>>>()?;

    let mut mean_hat = 0.0;
    for h in 0..m {
        let std_block = &roots[h] * cov.block(h, h) * &roots[h];
        mean_hat += w[h] * std_block.trace();
    }

    // tr{Gamma*(s,t) Gamma*(t,s)} = ||Gamma*(s,t)||_F^2, so the integrand
    // is symmetric in (s, t); compute the upper triangle once.
    let mut var_hat = 0.0;
    for s in 0..m {
        for t in s..m {
            let std_block = &roots[s] * cov.block(s, t) * &roots[t];
            let fro2: f64 = std_block.iter().map(|v| v * v).sum();
            let mult = if s == t { 1.0 } else { 2.0 };
            var_hat += mult * w[s] * w[t] * fro2;
        }
    }
    var_hat *= 2.0;

    if !mean_hat.is_finite() || !var_hat.is_finite() || mean_hat <= 0.0 || var_hat <= 0.0 {
        return Err(Error::InvalidCalibration {
            beta: var_hat / (2.0 * mean_hat),
            d: 2.0 * mean_hat * mean_hat / var_hat,
        });
    }
    Ok(WsCalibration {
        beta: var_hat / (2.0 * mean_hat),
        d: 2.0 * mean_hat * mean_hat / var_hat,
        mean_hat,
        var_hat,
    })
}

/// Upper-tail probability of `beta * chi^2_d` at the observed value,
/// through the regularized upper incomplete gamma function; fractional
/// degrees of freedom are supported.
pub fn ws_pvalue(f_int_value: f64, cal: &WsCalibration) -> Result<f64> {
    if !cal.beta.is_finite() || !cal.d.is_finite() || cal.beta <= 0.0 || cal.d <= 0.0 {
        return Err(Error::InvalidCalibration {
            beta: cal.beta,
            d: cal.d,
        });
    }
    if f_int_value <= 0.0 {
        return Ok(1.0);
    }
    Ok(statrs::function::gamma::gamma_ur(
        cal.d / 2.0,
        f_int_value / (2.0 * cal.beta),
    ))
}

/// p-value plus the raw replicate sequence of a resampling test.
#[derive(Debug, Clone)]
pub struct ResampleResult {
    pub p_value: f64,
    pub replicates: Vec<f64>,
}

pub(crate) struct BootstrapGlobal {
    pub fmax: ResampleResult,
    pub fint: ResampleResult,
}

/// Within-group residual bootstrap for both global statistics at once.
/// Each replicate resamples the centered subject-effect curves with
/// replacement within each group and recomputes the statistic; the pooled
/// covariance recenters each bootstrap group at its own bootstrap mean.
pub(crate) fn bootstrap_global(
    g: &GroupedSample,
    b: usize,
    seed: u64,
    quad: Quadrature,
    work_limit: Option<u64>,
) -> Result<BootstrapGlobal> {
    if b < 1 {
        return Err(Error::NothingToDo("bootstrap with B = 0 replicates"));
    }
    if let Some(limit) = work_limit {
        let requested = b as u64 * g.n() as u64;
        if requested > limit {
            return Err(Error::BudgetExceeded { requested, limit });
        }
    }
    let grid = g.grid();
    let (n1, n2) = (g.n1(), g.n2());

    let g1: Vec<&Vec<Vec<f64>>> = g.group1().iter().map(|s| &s.curves).collect();
    let g2: Vec<&Vec<Vec<f64>>> = g.group2().iter().map(|s| &s.curves).collect();
    let observed = pointwise_of(&g1, &g2, grid)?;
    let obs_curve = PointwiseCurve {
        grid: grid.clone(),
        t_values: observed,
    };
    let (obs_max, _) = f_max(&obs_curve);
    let obs_int = f_int_with(&obs_curve, quad);

    let residuals = pooled_residuals(g);
    let (res1, res2) = residuals.split_at(n1);

    let stats: Vec<(f64, f64)> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "bootstrap", r));
            let pick1: Vec<&Vec<Vec<f64>>> =
                (0..n1).map(|_| &res1[rng.random_range(0..n1)]).collect();
            let pick2: Vec<&Vec<Vec<f64>>> =
                (0..n2).map(|_| &res2[rng.random_range(0..n2)]).collect();
            let values = pointwise_of(&pick1, &pick2, grid)?;
            let curve = PointwiseCurve {
                grid: grid.clone(),
                t_values: values,
            };
            Ok((f_max(&curve).0, f_int_with(&curve, quad)))
        })
        .collect::<Result<Vec<_>>>()?;

    let pval = |obs: f64, reps: &[f64]| {
        (1 + reps.iter().filter(|v| **v >= obs).count()) as f64 / (reps.len() + 1) as f64
    };
    let max_reps: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let int_reps: Vec<f64> = stats.iter().map(|s| s.1).collect();
    Ok(BootstrapGlobal {
        fmax: ResampleResult {
            p_value: pval(obs_max, &max_reps),
            replicates: max_reps,
        },
        fint: ResampleResult {
            p_value: pval(obs_int, &int_reps),
            replicates: int_reps,
        },
    })
}

/// Bootstrap calibration of `F_max`; add-one p-value convention
/// `(1 + #{replicates >= observed}) / (B + 1)`.
pub fn bootstrap_fmax(g: &GroupedSample, b: usize, seed: u64) -> Result<ResampleResult> {
    bootstrap_fmax_with(g, b, seed, None)
}

pub fn bootstrap_fmax_with(
    g: &GroupedSample,
    b: usize,
    seed: u64,
    work_limit: Option<u64>,
) -> Result<ResampleResult> {
    bootstrap_global(g, b, seed, Quadrature::Trapezoid, work_limit).map(|r| r.fmax)
}

/// Label-permutation test: relabel sessions across groups uniformly at
/// random preserving group sizes and recompute the full statistic each
/// time.
pub fn permutation_test(
    g: &GroupedSample,
    statistic: GlobalStatistic,
    r: usize,
    seed: u64,
) -> Result<ResampleResult> {
    permutation_test_with(g, statistic, r, seed, Quadrature::Trapezoid)
}

pub fn permutation_test_with(
    g: &GroupedSample,
    statistic: GlobalStatistic,
    r: usize,
    seed: u64,
    quad: Quadrature,
) -> Result<ResampleResult> {
    if g.n() < 4 {
        return Err(Error::TooFewSessions(g.n()));
    }
    if r < 1 {
        return Err(Error::NothingToDo("permutation test with R = 0 replicates"));
    }
    let grid = g.grid();
    let n1 = g.n1();
    let pool: Vec<&Vec<Vec<f64>>> = g
        .group1()
        .iter()
        .chain(g.group2().iter())
        .map(|s| &s.curves)
        .collect();

    let stat_of = |group1: &[&Vec<Vec<f64>>], group2: &[&Vec<Vec<f64>>]| -> Result<f64> {
        let values = pointwise_of(group1, group2, grid)?;
        let curve = PointwiseCurve {
            grid: grid.clone(),
            t_values: values,
        };
        Ok(match statistic {
            GlobalStatistic::FMax => f_max(&curve).0,
            GlobalStatistic::FInt => f_int_with(&curve, quad),
        })
    };
    let observed = stat_of(&pool[..n1], &pool[n1..])?;

    let replicates: Vec<f64> = (0..r as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "permutation", i));
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            idx.shuffle(&mut rng);
            let group1: Vec<&Vec<Vec<f64>>> = idx[..n1].iter().map(|&j| pool[j]).collect();
            let group2: Vec<&Vec<Vec<f64>>> = idx[n1..].iter().map(|&j| pool[j]).collect();
            stat_of(&group1, &group2)
        })
        .collect::<Result<Vec<_>>>()?;

    let count = replicates.iter().filter(|v| **v >= observed).count();
    Ok(ResampleResult {
        p_value: (1 + count) as f64 / (r + 1) as f64,
        replicates,
    })
}
