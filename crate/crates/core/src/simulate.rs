//! Synthetic data with known truth: Gaussian-process curve samples and
//! stationary VAR(1) paths with a closed-form CCF.
//!
//! The GP sampler draws vector curves with a separable covariance
//! (squared-exponential kernel across lags, equicorrelation across
//! measures), used for size and power studies. The VAR(1) generator has a
//! closed-form cross-correlation from the discrete Lyapunov equation and
//! serves as an independent oracle for the CCF estimator.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ccf::CcfCurve;
use crate::error::{Error, Result};
use crate::funcsample::MultiCurveSample;
use crate::grid::LagGrid;
use crate::seed::derive_seed;

/// Squared-exponential within-curve covariance,
/// `k(s, t) = scale * exp(-(s - t)^2 / (2 length_scale^2))`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SqExpKernel {
    pub length_scale: f64,
    pub scale: f64,
}

/// Specification of a p-dimensional Gaussian-process curve sample on a
/// lag grid. The full (p*M) covariance is `C (x) K`: the kernel matrix
/// over grid lags tensored with an equicorrelation matrix across
/// measures, which is positive semidefinite by construction and verified
/// numerically at build time.
#[derive(Debug, Clone)]
pub struct GpSpec {
    grid: LagGrid,
    mean: Vec<Vec<f64>>,
    kernel: SqExpKernel,
    cross_measure_corr: f64,
    measures: Vec<String>,
    chol: Option<DMatrix<f64>>,
}

impl GpSpec {
    pub fn new(
        grid: LagGrid,
        mean: Vec<Vec<f64>>,
        measures: Vec<String>,
        kernel: SqExpKernel,
        cross_measure_corr: f64,
    ) -> Result<Self> {
        let p = mean.len();
        if p == 0 || measures.len() != p || mean.iter().any(|r| r.len() != grid.len()) {
            return Err(Error::InvalidKernel(
                "mean must be p x M with one measure name per row".to_string(),
            ));
        }
        if !kernel.length_scale.is_finite() || kernel.length_scale <= 0.0 {
            return Err(Error::InvalidKernel("length_scale must be positive".to_string()));
        }
        if kernel.scale < 0.0 {
            return Err(Error::InvalidKernel("scale must be nonnegative".to_string()));
        }
        if !(cross_measure_corr > -1.0 && cross_measure_corr < 1.0) {
            return Err(Error::InvalidKernel(
                "cross_measure_corr must lie in (-1, 1)".to_string(),
            ));
        }
        let chol = if kernel.scale == 0.0 {
            None
        } else {
            let cov = full_covariance(&grid, p, kernel, cross_measure_corr);
            let eig = nalgebra::linalg::SymmetricEigen::new(cov.clone());
            if eig.eigenvalues.min() < -1e-10 {
                return Err(Error::InvalidKernel(format!(
                    "induced covariance is not PSD (min eigenvalue {})",
                    eig.eigenvalues.min()
                )));
            }
            let mut jittered = cov;
            for i in 0..jittered.nrows() {
                jittered[(i, i)] += 1e-10;
            }
            let chol = jittered
                .cholesky()
                .ok_or_else(|| Error::InvalidKernel("Cholesky failed".to_string()))?;
            Some(chol.l())
        };
        Ok(GpSpec {
            grid,
            mean,
            kernel,
            cross_measure_corr,
            measures,
            chol,
        })
    }

    pub fn grid(&self) -> &LagGrid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[Vec<f64>] {
        &self.mean
    }

    pub fn kernel(&self) -> SqExpKernel {
        self.kernel
    }

    pub fn cross_measure_corr(&self) -> f64 {
        self.cross_measure_corr
    }

    pub fn measures(&self) -> &[String] {
        &self.measures
    }
}

fn full_covariance(grid: &LagGrid, p: usize, kernel: SqExpKernel, corr: f64) -> DMatrix<f64> {
    let m = grid.len();
    let h = grid.values();
    let mut cov = DMatrix::<f64>::zeros(p * m, p * m);
    for k1 in 0..p {
        for k2 in 0..p {
            let c = if k1 == k2 { 1.0 } else { corr };
            for i in 0..m {
                for j in 0..m {
                    let d = h[i] - h[j];
                    let k = kernel.scale
                        * (-d * d / (2.0 * kernel.length_scale * kernel.length_scale)).exp();
                    cov[(k1 * m + i, k2 * m + j)] = c * k;
                }
            }
        }
    }
    cov
}

/// Draw `n` independent curve samples. Each draw uses its own RNG stream
/// derived from (seed, index), so results do not depend on evaluation
/// order.
pub fn simulate_gp_sample(spec: &GpSpec, n: usize, seed: u64) -> Result<Vec<MultiCurveSample>> {
    let p = spec.p();
    let m = spec.grid.len();
    (0..n)
        .map(|i| {
            let curves: Vec<Vec<f64>> = match &spec.chol {
                None => spec.mean.clone(),
                Some(l) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "gp", i as u64));
                    let z =
                        DVector::from_iterator(p * m, (0..p * m).map(|_| rng.sample(StandardNormal)));
                    let draw = l * z;
                    (0..p)
                        .map(|k| {
                            (0..m)
                                .map(|j| spec.mean[k][j] + draw[k * m + j])
                                .collect()
                        })
                        .collect()
                }
            };
            MultiCurveSample::new(
                format!("gp{i}"),
                spec.grid.clone(),
                spec.measures.clone(),
                curves,
            )
        })
        .collect()
}

/// A stationary bivariate VAR(1): `X(t+1) = A X(t) + e(t)`,
/// `e ~ N(0, Sigma)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Var1Spec {
    pub a: [[f64; 2]; 2],
    pub sigma: [[f64; 2]; 2],
    pub len: usize,
    pub sample_rate_hz: f64,
    /// Overrides the default burn-in of `ceil(10 / (1 - spectral_radius))`.
    #[serde(default)]
    pub burn_in: Option<usize>,
}

impl Var1Spec {
    pub fn spectral_radius(&self) -> f64 {
        let tr = self.a[0][0] + self.a[1][1];
        let det = self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0];
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let r = disc.sqrt();
            ((tr + r) / 2.0).abs().max(((tr - r) / 2.0).abs())
        } else {
            // complex pair: modulus is sqrt(det)
            det.abs().sqrt()
        }
    }

    fn validate(&self) -> Result<()> {
        let rho = self.spectral_radius();
        if rho.is_nan() || rho >= 1.0 {
            return Err(Error::Nonstationary(rho));
        }
        if self.sigma[0][1] != self.sigma[1][0] {
            return Err(Error::InvalidKernel("Sigma must be symmetric".to_string()));
        }
        if self.sample_rate_hz.is_nan() || self.sample_rate_hz <= 0.0 {
            return Err(Error::InvalidKernel("sample_rate_hz must be positive".to_string()));
        }
        Ok(())
    }

    fn a_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.a[0][0], self.a[0][1], self.a[1][0], self.a[1][1])
    }

    fn sigma_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.sigma[0][0],
            self.sigma[0][1],
            self.sigma[1][0],
            self.sigma[1][1],
        )
    }

    /// Stationary covariance from the discrete Lyapunov equation
    /// `Gamma0 = A Gamma0 A^T + Sigma`, solved as a 4x4 linear system.
    pub fn stationary_covariance(&self) -> Result<Matrix2<f64>> {
        self.validate()?;
        let a = self.a_matrix();
        // (I - A (x) A) vec(Gamma0) = vec(Sigma), column-major vec
        let mut sys = DMatrix::<f64>::identity(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        // vec index: column-major (row + 2*col)
                        sys[(i + 2 * j, k + 2 * l)] -= a[(i, k)] * a[(j, l)];
                    }
                }
            }
        }
        let s = self.sigma_matrix();
        let rhs = DVector::from_column_slice(&[s[(0, 0)], s[(1, 0)], s[(0, 1)], s[(1, 1)]]);
        let sol = sys
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidKernel("Lyapunov system singular".to_string()))?;
        Ok(Matrix2::new(sol[0], sol[2], sol[1], sol[3]))
    }
}

/// Closed-form cross-correlation of the two VAR(1) components on a lag
/// grid. Uses `Cov(X(t), X(t+l)) = Gamma0 (A^l)^T` for `l >= 0` with the
/// convention that positive lag means the second component leads.
pub fn theoretical_var1_ccf(spec: &Var1Spec, grid: &LagGrid) -> Result<CcfCurve> {
    spec.validate()?;
    let gamma0 = spec.stationary_covariance()?;
    let a = spec.a_matrix();
    let lags = grid.sample_lags(spec.sample_rate_hz)?;
    let norm = (gamma0[(0, 0)] * gamma0[(1, 1)]).sqrt();
    if norm.is_nan() || norm <= 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let max_abs = lags.iter().map(|l| l.unsigned_abs()).max().unwrap_or(0);
    // powers[k] = A^k Gamma0 = Cov(X(t+k), X(t))
    let mut powers = Vec::with_capacity(max_abs as usize + 1);
    powers.push(gamma0);
    for k in 1..=max_abs as usize {
        powers.push(a * powers[k - 1]);
    }
    let rho = lags
        .iter()
        .map(|&l| {
            // gamma12(l) = Cov(x1(t), x2(t+l))
            let g = if l >= 0 {
                powers[l as usize][(1, 0)]
            } else {
                powers[(-l) as usize][(0, 1)]
            };
            g / norm
        })
        .collect();
    Ok(CcfCurve {
        grid: grid.clone(),
        rho,
    })
}

/// Simulate a stationary path of length `spec.len`, discarding a burn-in.
pub fn simulate_var1_path(spec: &Var1Spec, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    let rho = spec.spectral_radius();
    let burn = spec
        .burn_in
        .unwrap_or_else(|| (10.0 / (1.0 - rho)).ceil() as usize);
    let a = self_a(spec);
    let innov_root = sqrt_psd(spec.sigma_matrix())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "var1", 0));
    let mut state = Vector2::new(0.0, 0.0);
    let mut x = Vec::with_capacity(spec.len);
    let mut y = Vec::with_capacity(spec.len);
    for t in 0..burn + spec.len {
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        state = a * state + innov_root * z;
        if t >= burn {
            x.push(state[0]);
            y.push(state[1]);
        }
    }
    Ok((x, y))
}

fn self_a(spec: &Var1Spec) -> Matrix2<f64> {
    Matrix2::new(spec.a[0][0], spec.a[0][1], spec.a[1][0], spec.a[1][1])
}

/// Symmetric PSD square root with negative eigenvalues clamped to zero,
/// so a zero innovation matrix yields a zero path rather than an error.
fn sqrt_psd(m: Matrix2<f64>) -> Result<Matrix2<f64>> {
    let eig = nalgebra::linalg::SymmetricEigen::new(m);
    if eig.eigenvalues.min() < -1e-10 {
        return Err(Error::InvalidKernel("Sigma is not PSD".to_string()));
    }
    let mut out = Matrix2::zeros();
    for k in 0..2 {
        let w = eig.eigenvalues[k].max(0.0).sqrt();
        let u = eig.eigenvectors.column(k);
        for i in 0..2 {
            for j in 0..2 {
                out[(i, j)] += w * u[i] * u[j];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccf::ccf_curve;

    fn gp_spec(scale: f64) -> GpSpec {
        let grid = LagGrid::default_grid();
        let mean = vec![
            grid.values().iter().map(|h| h.cos()).collect(),
            grid.values().iter().map(|h| h.sin()).collect(),
        ];
        GpSpec::new(
            grid,
            mean,
            vec!["velocity".to_string(), "accel_signed".to_string()],
            SqExpKernel {
                length_scale: 0.3,
                scale,
            },
            0.4,
        )
        .unwrap()
    }

    #[test]
    fn zero_scale_returns_mean_exactly() {
        let spec = gp_spec(0.0);
        let draws = simulate_gp_sample(&spec, 3, 1).unwrap();
        for d in draws {
            assert_eq!(d.curves, spec.mean().to_vec());
        }
    }

    #[test]
    fn gp_deterministic_and_order_free() {
        let spec = gp_spec(0.05);
        let a = simulate_gp_sample(&spec, 4, 9).unwrap();
        let b = simulate_gp_sample(&spec, 4, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.curves, y.curves);
        }
        // first draws of a longer run coincide with a shorter run
        let c = simulate_gp_sample(&spec, 2, 9).unwrap();
        assert_eq!(a[0].curves, c[0].curves);
        assert_eq!(a[1].curves, c[1].curves);
    }

    #[test]
    fn gp_mean_converges() {
        let spec = gp_spec(0.04);
        let n = 10_000;
        let draws = simulate_gp_sample(&spec, n, 3).unwrap();
        let tol = 4.0 * spec.kernel().scale.sqrt() / (n as f64).sqrt();
        for k in 0..2 {
            for j in 0..spec.grid().len() {
                let mean: f64 = draws.iter().map(|d| d.curves[k][j]).sum::<f64>() / n as f64;
                assert!(
                    (mean - spec.mean()[k][j]).abs() < tol,
                    "measure {k} lag {j}: {} vs {}",
                    mean,
                    spec.mean()[k][j]
                );
            }
        }
    }

    #[test]
    fn gp_covariance_matches_kernel() {
        let spec = gp_spec(0.04);
        let n = 5_000;
        let draws = simulate_gp_sample(&spec, n, 4).unwrap();
        let m = spec.grid().len();
        let h = spec.grid().values();
        let tol = 5.0 * spec.kernel().scale / (n as f64).sqrt();
        // spot-check a strided subset of the (measure, lag) covariance entries
        for (k1, k2) in [(0, 0), (0, 1), (1, 1)] {
            for i in (0..m).step_by(8) {
                for j in (0..m).step_by(8) {
                    let mut acc = 0.0;
                    for d in &draws {
                        acc += (d.curves[k1][i] - spec.mean()[k1][i])
                            * (d.curves[k2][j] - spec.mean()[k2][j]);
                    }
                    let emp = acc / (n - 1) as f64;
                    let dlag = h[i] - h[j];
                    let c = if k1 == k2 { 1.0 } else { spec.cross_measure_corr() };
                    let theory = c
                        * spec.kernel().scale
                        * (-dlag * dlag / (2.0 * 0.3 * 0.3)).exp();
                    assert!(
                        (emp - theory).abs() < tol,
                        "({k1},{k2},{i},{j}): {emp} vs {theory}"
                    );
                }
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let grid = LagGrid::default_grid();
        let mean = vec![vec![0.0; 41]];
        assert!(GpSpec::new(
            grid.clone(),
            mean.clone(),
            vec!["v".to_string()],
            SqExpKernel {
                length_scale: 0.0,
                scale: 1.0
            },
            0.0
        )
        .is_err());
        assert!(GpSpec::new(
            grid,
            mean,
            vec!["v".to_string()],
            SqExpKernel {
                length_scale: 0.3,
                scale: 1.0
            },
            1.0
        )
        .is_err());
    }

    fn white_noise_spec(sigma: [[f64; 2]; 2]) -> Var1Spec {
        Var1Spec {
            a: [[0.0, 0.0], [0.0, 0.0]],
            sigma,
            len: 1000,
            sample_rate_hz: 20.0,
            burn_in: None,
        }
    }

    #[test]
    fn white_noise_ccf_zero() {
        let spec = white_noise_spec([[1.0, 0.0], [0.0, 1.0]]);
        let grid = LagGrid::default_grid();
        let ccf = theoretical_var1_ccf(&spec, &grid).unwrap();
        for r in &ccf.rho {
            assert_eq!(*r, 0.0);
        }
    }

    #[test]
    fn contemporaneous_only_dependence() {
        let spec = white_noise_spec([[1.0, 0.5], [0.5, 1.0]]);
        let grid = LagGrid::default_grid();
        let ccf = theoretical_var1_ccf(&spec, &grid).unwrap();
        for (h, r) in grid.values().iter().zip(&ccf.rho) {
            if *h == 0.0 {
                assert!((r - 0.5).abs() < 1e-12);
            } else {
                assert_eq!(*r, 0.0);
            }
        }
    }

    #[test]
    fn nonstationary_rejected() {
        let spec = Var1Spec {
            a: [[1.01, 0.0], [0.0, 0.5]],
            sigma: [[1.0, 0.0], [0.0, 1.0]],
            len: 10,
            sample_rate_hz: 20.0,
            burn_in: None,
        };
        assert!(matches!(
            theoretical_var1_ccf(&spec, &LagGrid::default_grid()),
            Err(Error::Nonstationary(_))
        ));
    }

    #[test]
    fn zero_innovations_zero_path() {
        let spec = Var1Spec {
            a: [[0.5, 0.1], [0.0, 0.3]],
            sigma: [[0.0, 0.0], [0.0, 0.0]],
            len: 100,
            sample_rate_hz: 20.0,
            burn_in: None,
        };
        let (x, y) = simulate_var1_path(&spec, 1).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn path_deterministic() {
        let spec = Var1Spec {
            a: [[0.6, 0.2], [-0.1, 0.5]],
            sigma: [[1.0, 0.3], [0.3, 1.0]],
            len: 500,
            sample_rate_hz: 20.0,
            burn_in: None,
        };
        let (x1, y1) = simulate_var1_path(&spec, 7).unwrap();
        let (x2, y2) = simulate_var1_path(&spec, 7).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(y1, y2);
    }

    #[test]
    fn path_variance_matches_lyapunov() {
        let spec = Var1Spec {
            a: [[0.7, 0.1], [0.2, 0.4]],
            sigma: [[1.0, 0.2], [0.2, 0.8]],
            len: 100_000,
            sample_rate_hz: 20.0,
            burn_in: None,
        };
        let gamma0 = spec.stationary_covariance().unwrap();
        let (x, y) = simulate_var1_path(&spec, 11).unwrap();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!((var(&x) - gamma0[(0, 0)]).abs() / gamma0[(0, 0)] < 0.05);
        assert!((var(&y) - gamma0[(1, 1)]).abs() / gamma0[(1, 1)] < 0.05);
    }

    #[test]
    fn empirical_ccf_matches_theory() {
        let spec = Var1Spec {
            a: [[0.5, 0.25], [-0.2, 0.6]],
            sigma: [[1.0, 0.4], [0.4, 1.0]],
            len: 200_000,
            sample_rate_hz: 20.0,
            burn_in: None,
        };
        let grid = LagGrid::default_grid();
        let theory = theoretical_var1_ccf(&spec, &grid).unwrap();
        let (x, y) = simulate_var1_path(&spec, 13).unwrap();
        let emp = ccf_curve(&x, &y, &grid, spec.sample_rate_hz).unwrap();
        for (i, (e, t)) in emp.rho.iter().zip(&theory.rho).enumerate() {
            assert!((e - t).abs() < 0.01, "lag index {i}: {e} vs {t}");
        }
    }

    #[test]
    fn lag_zero_ccf_symmetric_under_component_swap() {
        let spec = Var1Spec {
            a: [[0.5, 0.25], [-0.2, 0.6]],
            sigma: [[1.0, 0.4], [0.4, 1.0]],
            len: 10,
            sample_rate_hz: 20.0,
            burn_in: None,
        };
        let gamma0 = spec.stationary_covariance().unwrap();
        // Gamma0 is symmetric, so the lag-0 correlation is swap-invariant
        assert!((gamma0[(0, 1)] - gamma0[(1, 0)]).abs() < 1e-12);
    }
}
