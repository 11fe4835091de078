//! Common lag-domain discretization shared by all curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid of `m` lag values on `[a, b]` seconds.
///
/// The default analysis window is `[-1, 1]` seconds on 41 grid points.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct LagGrid {
    a: f64,
    b: f64,
    m: usize,
    values: Vec<f64>,
    delta_h: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridParams {
    a: f64,
    b: f64,
    m: usize,
}

impl TryFrom<GridParams> for LagGrid {
    type Error = Error;
    fn try_from(p: GridParams) -> Result<Self> {
        LagGrid::new(p.a, p.b, p.m)
    }
}

impl From<LagGrid> for GridParams {
    fn from(g: LagGrid) -> Self {
        GridParams {
            a: g.a,
            b: g.b,
            m: g.m,
        }
    }
}

impl PartialEq for LagGrid {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b && self.m == other.m
    }
}

impl LagGrid {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidGrid(format!("need a < b, got [{a}, {b}]")));
        }
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need m >= 2, got {m}")));
        }
        let delta_h = (b - a) / (m - 1) as f64;
        let mut values: Vec<f64> = (0..m).map(|i| a + i as f64 * delta_h).collect();
        values[m - 1] = b;
        Ok(LagGrid {
            a,
            b,
            m,
            values,
            delta_h,
        })
    }

    /// `[-1, 1]` seconds, 41 points.
    pub fn default_grid() -> Self {
        Self::new(-1.0, 1.0, 41).expect("default grid is valid")
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn span(&self) -> f64 {
        self.b - self.a
    }

    pub fn delta_h(&self) -> f64 {
        self.delta_h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Convert the lag values in seconds to integer sample lags at the given
    /// sampling rate, by nearest-integer rounding. Two grid lags mapping to
    /// the same sample lag is an error rather than a silent merge.
    pub fn sample_lags(&self, sample_rate_hz: f64) -> Result<Vec<i64>> {
        let lags: Vec<i64> = self
            .values
            .iter()
            .map(|h| (h * sample_rate_hz).round() as i64)
            .collect();
        for i in 1..lags.len() {
            if lags[i] == lags[i - 1] {
                return Err(Error::GridTooFine {
                    rate_hz: sample_rate_hz,
                    h1: self.values[i - 1],
                    h2: self.values[i],
                });
            }
        }
        Ok(lags)
    }

    /// Quadrature weights: trapezoidal rule, interior weight `delta_h`,
    /// endpoint weight `delta_h / 2`. Weights sum to `b - a`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.delta_h; self.m];
        w[0] = 0.5 * self.delta_h;
        w[self.m - 1] = 0.5 * self.delta_h;
        w
    }
}
