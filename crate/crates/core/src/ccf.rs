//! Cross-covariance and cross-correlation estimation over a lag grid.
//!
//! Conventions: positive lag `l` pairs `x(t)` with `y(t+l)`, so a positive
//! lag means `y` leads relative to `x`. Covariances use full-sample means
//! and divisor T (the classical correlogram convention, which keeps
//! `|rho| <= 1`); divisor `T - |l|` is available behind [`CovDivisor`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LagGrid;

/// Divisor convention for the cross-covariance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovDivisor {
    /// Divide by T regardless of lag (default).
    #[default]
    FullLength,
    /// Divide by the number of overlapping pairs, T - |l|.
    PerLag,
}

/// A cross-correlation curve on a lag grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcfCurve {
    pub grid: LagGrid,
    pub rho: Vec<f64>,
}

/// Empirical cross-covariance at an integer sample lag, divisor T.
pub fn cross_covariance(x: &[f64], y: &[f64], lag: i64) -> Result<f64> {
    cross_covariance_with(x, y, lag, CovDivisor::FullLength)
}

pub fn cross_covariance_with(x: &[f64], y: &[f64], lag: i64, div: CovDivisor) -> Result<f64> {
    let t = x.len();
    if y.len() != t {
        return Err(Error::LengthMismatch { x: t, y: y.len() });
    }
    if t < 2 {
        return Err(Error::TooShort { need: 2, got: t });
    }
    if lag.unsigned_abs() as usize >= t {
        return Err(Error::LagExceedsSeries { lag, len: t });
    }
    let xm = mean(x);
    let ym = mean(y);
    let (xs, ys) = if lag >= 0 {
        (&x[..t - lag as usize], &y[lag as usize..])
    } else {
        (&x[(-lag) as usize..], &y[..t - (-lag) as usize])
    };
    let acc: f64 = xs
        .iter()
        .zip(ys)
        .map(|(a, b)| (a - xm) * (b - ym))
        .sum();
    let divisor = match div {
        CovDivisor::FullLength => t as f64,
        CovDivisor::PerLag => xs.len() as f64,
    };
    Ok(acc / divisor)
}

/// Estimate the CCF of `(x, y)` on a lag grid in seconds. Grid lags are
/// converted to integer sample lags by nearest-integer rounding.
pub fn ccf_curve(x: &[f64], y: &[f64], grid: &LagGrid, sample_rate_hz: f64) -> Result<CcfCurve> {
    ccf_curve_with(x, y, grid, sample_rate_hz, CovDivisor::FullLength)
}

pub fn ccf_curve_with(
    x: &[f64],
    y: &[f64],
    grid: &LagGrid,
    sample_rate_hz: f64,
    div: CovDivisor,
) -> Result<CcfCurve> {
    let lags = grid.sample_lags(sample_rate_hz)?;
    let t = x.len();
    for &l in &lags {
        if l.unsigned_abs() as usize >= t {
            return Err(Error::LagExceedsSeries { lag: l, len: t });
        }
    }
    let var_x = cross_covariance_with(x, x, 0, div)?;
    let var_y = cross_covariance_with(y, y, 0, div)?;
    if var_x <= 0.0 || var_y <= 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let norm = (var_x * var_y).sqrt();
    let rho = lags
        .iter()
        .map(|&l| cross_covariance_with(x, y, l, div).map(|g| g / norm))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CcfCurve {
        grid: grid.clone(),
        rho,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Independent brute-force oracle: recompute the definition with an
    /// explicit double loop. Kept free of any shared helpers.
    pub(crate) fn naive_cross_cov(x: &[f64], y: &[f64], lag: i64) -> f64 {
        let t = x.len() as i64;
        let mut xm = 0.0;
        for v in x {
            xm += v;
        }
        xm /= t as f64;
        let mut ym = 0.0;
        for v in y {
            ym += v;
        }
        ym /= t as f64;
        let mut acc = 0.0;
        for i in 0..t {
            let j = i + lag;
            if j >= 0 && j < t {
                acc += (x[i as usize] - xm) * (y[j as usize] - ym);
            }
        }
        acc / t as f64
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn lag_zero_variance() {
        let v = cross_covariance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_factor_gives_zero() {
        let x = [4.0; 10];
        let y = noise(10, 1);
        for lag in -3i64..=3 {
            assert_eq!(cross_covariance(&x, &y, lag).unwrap(), 0.0);
        }
    }

    #[test]
    fn matches_double_loop_oracle() {
        let x = noise(200, 2);
        let y = noise(200, 3);
        for lag in -60i64..=60 {
            let fast = cross_covariance(&x, &y, lag).unwrap();
            let slow = naive_cross_cov(&x, &y, lag);
            assert!((fast - slow).abs() < 1e-12, "lag {lag}");
        }
    }

    #[test]
    fn errors() {
        let x = noise(10, 4);
        assert!(matches!(
            cross_covariance(&x, &x, 10),
            Err(Error::LagExceedsSeries { .. })
        ));
        assert!(matches!(
            cross_covariance(&[1.0], &[1.0], 0),
            Err(Error::TooShort { .. })
        ));
        let grid = LagGrid::default_grid();
        let c = [5.0; 100];
        assert!(matches!(
            ccf_curve(&c, &x, &grid, 20.0).map(|_| ()),
            Err(Error::DegenerateSeries)
        ));
    }

    #[test]
    fn autocorrelation_at_zero_is_one() {
        let x = noise(500, 5);
        let grid = LagGrid::default_grid();
        let curve = ccf_curve(&x, &x, &grid, 20.0).unwrap();
        assert!((curve.rho[20] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_noise_peaks_at_shift() {
        // y(t) = x(t-k), i.e. y trails x by k samples: under
        // gamma12(l) = Cov{x(t), y(t+l)} the peak sits at lag +k/rate,
        // with peak value -> 1 as T grows
        let t = 10_000;
        let k = 7usize;
        let base = noise(t + k, 6);
        let x: Vec<f64> = base[k..].to_vec();
        let y: Vec<f64> = base[..t].to_vec();
        let grid = LagGrid::default_grid();
        let curve = ccf_curve(&x, &y, &grid, 20.0).unwrap();
        // lag h = k/20 = 0.35 s is grid index 27
        let (argmax, max) = curve
            .rho
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .unwrap();
        assert!((grid.values()[argmax] - 0.35).abs() < 1e-9);
        assert!((max - 1.0).abs() < 0.02);
    }

    #[test]
    fn swap_antisymmetry_exact() {
        let x = noise(400, 7);
        let y = noise(400, 8);
        let grid = LagGrid::default_grid();
        let xy = ccf_curve(&x, &y, &grid, 20.0).unwrap();
        let yx = ccf_curve(&y, &x, &grid, 20.0).unwrap();
        let m = grid.len();
        for i in 0..m {
            assert_eq!(xy.rho[i], yx.rho[m - 1 - i]);
        }
    }

    #[test]
    fn rho_bounded() {
        for seed in 0..20 {
            let x = noise(150, 100 + seed);
            let y = noise(150, 200 + seed);
            let grid = LagGrid::default_grid();
            let curve = ccf_curve(&x, &y, &grid, 20.0).unwrap();
            for r in &curve.rho {
                assert!(r.abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn per_lag_divisor_rescales() {
        let x = noise(100, 9);
        let y = noise(100, 10);
        let full = cross_covariance_with(&x, &y, 10, CovDivisor::FullLength).unwrap();
        let per = cross_covariance_with(&x, &y, 10, CovDivisor::PerLag).unwrap();
        assert!((full * 100.0 / 90.0 - per).abs() < 1e-14);
    }
}
