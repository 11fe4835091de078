//! Grouped multivariate functional samples and the pooled covariance
//! matrix function.
//!
//! Each session contributes a p-vector of curves on the shared lag grid.
//! Group means are elementwise; the pooled covariance function
//! `Gamma(s, t)` is the within-group residual cross-product over both
//! groups with divisor n - 2, materialized as an M x M array of p x p
//! blocks with the transpose identity `Gamma(s, t) = Gamma(t, s)^T` exact.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::LagGrid;

/// One session's p x M curve matrix (row per measure, column per lag).
#[derive(Debug, Clone)]
pub struct MultiCurveSample {
    pub session_id: String,
    pub grid: LagGrid,
    /// Measure names, length p; order fixed across a dataset.
    pub measures: Vec<String>,
    /// p rows of length M.
    pub curves: Vec<Vec<f64>>,
}

impl MultiCurveSample {
    pub fn new(
        session_id: impl Into<String>,
        grid: LagGrid,
        measures: Vec<String>,
        curves: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let session_id = session_id.into();
        if measures.is_empty() || curves.len() != measures.len() {
            return Err(Error::InvalidSession {
                id: session_id,
                reason: "need one curve per measure, p >= 1".to_string(),
            });
        }
        if curves.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidSession {
                id: session_id,
                reason: "curve length does not match grid".to_string(),
            });
        }
        Ok(MultiCurveSample {
            session_id,
            grid,
            measures,
            curves,
        })
    }

    pub fn p(&self) -> usize {
        self.measures.len()
    }
}

/// Two groups of sessions on a common grid with a common measure list.
#[derive(Debug, Clone)]
pub struct GroupedSample {
    group1: Vec<MultiCurveSample>,
    group2: Vec<MultiCurveSample>,
}

impl GroupedSample {
    pub fn new(group1: Vec<MultiCurveSample>, group2: Vec<MultiCurveSample>) -> Result<Self> {
        if group1.len() < 2 || group2.len() < 2 {
            let n = group1.len().min(group2.len());
            return Err(Error::GroupTooSmall { n, min: 2 });
        }
        let first = &group1[0];
        let p = first.p();
        for s in group1.iter().chain(group2.iter()) {
            if s.grid != first.grid || s.measures != first.measures {
                return Err(Error::MismatchedSamples);
            }
        }
        let n = group1.len() + group2.len();
        if n <= p + 2 {
            return Err(Error::TooFewForDimension { n, p });
        }
        Ok(GroupedSample { group1, group2 })
    }

    pub fn group1(&self) -> &[MultiCurveSample] {
        &self.group1
    }

    pub fn group2(&self) -> &[MultiCurveSample] {
        &self.group2
    }

    pub fn n1(&self) -> usize {
        self.group1.len()
    }

    pub fn n2(&self) -> usize {
        self.group2.len()
    }

    pub fn n(&self) -> usize {
        self.group1.len() + self.group2.len()
    }

    pub fn p(&self) -> usize {
        self.group1[0].p()
    }

    pub fn grid(&self) -> &LagGrid {
        &self.group1[0].grid
    }

    pub fn measures(&self) -> &[String] {
        &self.group1[0].measures
    }
}

/// Elementwise arithmetic mean of the curve matrices, p x M.
pub fn group_mean(samples: &[MultiCurveSample]) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Err(Error::EmptyGroup);
    }
    Ok(mean_of(&samples.iter().map(|s| &s.curves).collect::<Vec<_>>()))
}

pub(crate) fn mean_of(curves: &[&Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let p = curves[0].len();
    let m = curves[0][0].len();
    let n = curves.len() as f64;
    let mut out = vec![vec![0.0; m]; p];
    for c in curves {
        for k in 0..p {
            for j in 0..m {
                out[k][j] += c[k][j];
            }
        }
    }
    for row in &mut out {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    out
}

/// The pooled covariance matrix function on the full grid.
#[derive(Debug, Clone)]
pub struct PooledCovFunction {
    grid: LagGrid,
    p: usize,
    /// Row-major M x M blocks, each p x p.
    blocks: Vec<DMatrix<f64>>,
}

impl PooledCovFunction {
    pub fn grid(&self) -> &LagGrid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn block(&self, s: usize, t: usize) -> &DMatrix<f64> {
        &self.blocks[s * self.grid.len() + t]
    }
}

/// `Gamma(s, t) = (1/(n-2)) sum_i sum_j (Y_ij(s) - mean_i(s))(Y_ij(t) - mean_i(t))^T`
/// over both groups, for every grid pair. Only the upper triangle is
/// computed; the lower triangle is its exact transpose.
pub fn pooled_covariance(g: &GroupedSample) -> Result<PooledCovFunction> {
    let n = g.n();
    if n <= 2 {
        return Err(Error::InsufficientSessions(n));
    }
    let p = g.p();
    let m = g.grid().len();
    let residuals = pooled_residuals(g);
    let scale = 1.0 / (n - 2) as f64;

    let mut blocks = vec![DMatrix::<f64>::zeros(p, p); m * m];
    for s in 0..m {
        for t in s..m {
            let mut block = DMatrix::<f64>::zeros(p, p);
            for r in &residuals {
                for a in 0..p {
                    for b in 0..p {
                        block[(a, b)] += r[a][s] * r[b][t];
                    }
                }
            }
            block *= scale;
            blocks[t * m + s] = block.transpose();
            blocks[s * m + t] = block;
        }
    }
    Ok(PooledCovFunction {
        grid: g.grid().clone(),
        p,
        blocks,
    })
}

/// Residual curves `Y_ij - mean_i` for every session, both groups
/// concatenated (group 1 first).
pub(crate) fn pooled_residuals(g: &GroupedSample) -> Vec<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(g.n());
    for group in [g.group1(), g.group2()] {
        let mean = mean_of(&group.iter().map(|s| &s.curves).collect::<Vec<_>>());
        for s in group {
            let r: Vec<Vec<f64>> = s
                .curves
                .iter()
                .zip(&mean)
                .map(|(row, mrow)| row.iter().zip(mrow).map(|(v, m)| v - m).collect())
                .collect();
            out.push(r);
        }
    }
    out
}

/// Diagonal blocks `Gamma(h, h)` only, computed from borrowed curve
/// matrices. Shared by the bootstrap and permutation loops, which never
/// need the off-diagonal blocks.
pub(crate) fn diag_cov_blocks(
    group1: &[&Vec<Vec<f64>>],
    group2: &[&Vec<Vec<f64>>],
) -> Vec<DMatrix<f64>> {
    let p = group1[0].len();
    let m = group1[0][0].len();
    let n = group1.len() + group2.len();
    let scale = 1.0 / (n - 2) as f64;
    let mut blocks = vec![DMatrix::<f64>::zeros(p, p); m];
    for group in [group1, group2] {
        let mean = mean_of(group);
        for c in group {
            for h in 0..m {
                let block = &mut blocks[h];
                for a in 0..p {
                    let ra = c[a][h] - mean[a][h];
                    for b in a..p {
                        block[(a, b)] += ra * (c[b][h] - mean[b][h]);
                    }
                }
            }
        }
    }
    for block in &mut blocks {
        for a in 0..p {
            for b in a..p {
                block[(a, b)] *= scale;
                block[(b, a)] = block[(a, b)];
            }
        }
    }
    blocks
}

/// Ratio of group-specific covariance traces, emitted as a warning-level
/// diagnostic for the common-covariance assumption. Returns
/// `trace1 / trace2` of the within-group covariance functions integrated
/// over the diagonal.
pub fn covariance_trace_ratio(g: &GroupedSample) -> f64 {
    let trace_of = |group: &[MultiCurveSample]| -> f64 {
        let n = group.len();
        if n < 2 {
            return f64::NAN;
        }
        let mean = mean_of(&group.iter().map(|s| &s.curves).collect::<Vec<_>>());
        let mut acc = 0.0;
        for s in group {
            for (row, mrow) in s.curves.iter().zip(&mean) {
                for (v, mv) in row.iter().zip(mrow) {
                    let r = v - mv;
                    acc += r * r;
                }
            }
        }
        acc / (n - 1) as f64
    };
    trace_of(g.group1()) / trace_of(g.group2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn random_sample(
        id: &str,
        grid: &LagGrid,
        p: usize,
        rng: &mut ChaCha8Rng,
    ) -> MultiCurveSample {
        let curves = (0..p)
            .map(|_| (0..grid.len()).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        MultiCurveSample::new(
            id,
            grid.clone(),
            (0..p).map(|k| format!("m{k}")).collect(),
            curves,
        )
        .unwrap()
    }

    fn grouped(n1: usize, n2: usize, p: usize, seed: u64) -> GroupedSample {
        let grid = LagGrid::new(-1.0, 1.0, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g1 = (0..n1)
            .map(|i| random_sample(&format!("a{i}"), &grid, p, &mut rng))
            .collect();
        let g2 = (0..n2)
            .map(|i| random_sample(&format!("b{i}"), &grid, p, &mut rng))
            .collect();
        GroupedSample::new(g1, g2).unwrap()
    }

    #[test]
    fn group_mean_examples() {
        let grid = LagGrid::new(-1.0, 1.0, 5).unwrap();
        let mk = |c: f64| {
            MultiCurveSample::new(
                "s",
                grid.clone(),
                vec!["v".to_string()],
                vec![vec![c; 5]],
            )
            .unwrap()
        };
        // single sample is its own mean
        let single = group_mean(&[mk(3.5)]).unwrap();
        assert_eq!(single, vec![vec![3.5; 5]]);
        // +c and -c cancel
        let zero = group_mean(&[mk(2.0), mk(-2.0)]).unwrap();
        assert_eq!(zero, vec![vec![0.0; 5]]);
        assert!(matches!(group_mean(&[]), Err(Error::EmptyGroup)));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn group_mean_matches_elementwise_oracle() {
        let grid = LagGrid::new(-1.0, 1.0, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<_> = (0..5)
            .map(|i| random_sample(&format!("s{i}"), &grid, 2, &mut rng))
            .collect();
        let mean = group_mean(&samples).unwrap();
        for k in 0..2 {
            for j in 0..9 {
                let mut acc = 0.0;
                for s in &samples {
                    acc += s.curves[k][j];
                }
                assert!((mean[k][j] - acc / 5.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pooled_cov_zero_for_repeated_curves() {
        let grid = LagGrid::new(-1.0, 1.0, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_sample("a", &grid, 2, &mut rng);
        let b = random_sample("b", &grid, 2, &mut rng);
        let g = GroupedSample::new(
            vec![a.clone(), a.clone(), a.clone()],
            vec![b.clone(), b.clone(), b.clone()],
        )
        .unwrap();
        let cov = pooled_covariance(&g).unwrap();
        // residuals vanish up to the roundoff of mean(3 copies)
        for s in 0..7 {
            for t in 0..7 {
                assert!(cov.block(s, t).amax() < 1e-30);
            }
        }
    }

    #[test]
    fn p1_matches_textbook_pooled_variance() {
        let g = grouped(6, 6, 1, 3);
        let cov = pooled_covariance(&g).unwrap();
        let m = g.grid().len();
        for h in 0..m {
            let vals1: Vec<f64> = g.group1().iter().map(|s| s.curves[0][h]).collect();
            let vals2: Vec<f64> = g.group2().iter().map(|s| s.curves[0][h]).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let ss = |v: &[f64]| {
                let m = mean(v);
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
            };
            let pooled = (ss(&vals1) + ss(&vals2)) / (vals1.len() + vals2.len() - 2) as f64;
            assert!((cov.block(h, h)[(0, 0)] - pooled).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_identity_exact() {
        let g = grouped(5, 7, 2, 4);
        let cov = pooled_covariance(&g).unwrap();
        let m = g.grid().len();
        for s in 0..m {
            for t in 0..m {
                assert_eq!(cov.block(s, t).clone(), cov.block(t, s).transpose());
            }
        }
    }

    #[test]
    fn invariant_to_within_group_permutation() {
        let g = grouped(5, 5, 2, 5);
        let mut g1 = g.group1().to_vec();
        g1.reverse();
        let shuffled = GroupedSample::new(g1, g.group2().to_vec()).unwrap();
        let cov_a = pooled_covariance(&g).unwrap();
        let cov_b = pooled_covariance(&shuffled).unwrap();
        let m = g.grid().len();
        for s in 0..m {
            for t in 0..m {
                assert!((cov_a.block(s, t) - cov_b.block(s, t)).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn shift_invariance_of_pooled_cov() {
        // adding a fixed curve to every session in group 1 leaves Gamma unchanged
        let g = grouped(5, 5, 2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shift: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..g.grid().len()).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let shifted: Vec<MultiCurveSample> = g
            .group1()
            .iter()
            .map(|s| {
                let curves = s
                    .curves
                    .iter()
                    .zip(&shift)
                    .map(|(row, sh)| row.iter().zip(sh).map(|(v, d)| v + d).collect())
                    .collect();
                MultiCurveSample::new(&s.session_id, s.grid.clone(), s.measures.clone(), curves)
                    .unwrap()
            })
            .collect();
        let g2 = GroupedSample::new(shifted, g.group2().to_vec()).unwrap();
        let cov_a = pooled_covariance(&g).unwrap();
        let cov_b = pooled_covariance(&g2).unwrap();
        let m = g.grid().len();
        for s in 0..m {
            for t in 0..m {
                assert!((cov_a.block(s, t) - cov_b.block(s, t)).amax() < 1e-12);
            }
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn diag_blocks_agree_with_full() {
        let g = grouped(4, 6, 2, 8);
        let cov = pooled_covariance(&g).unwrap();
        let g1: Vec<&Vec<Vec<f64>>> = g.group1().iter().map(|s| &s.curves).collect();
        let g2: Vec<&Vec<Vec<f64>>> = g.group2().iter().map(|s| &s.curves).collect();
        let diag = diag_cov_blocks(&g1, &g2);
        for h in 0..g.grid().len() {
            assert!((cov.block(h, h) - &diag[h]).amax() < 1e-14);
        }
    }

    #[test]
    fn grouped_sample_validation() {
        let grid = LagGrid::new(-1.0, 1.0, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mk = |rng: &mut ChaCha8Rng| random_sample("s", &grid, 2, rng);
        // n1 < 2
        assert!(GroupedSample::new(vec![mk(&mut rng)], vec![mk(&mut rng), mk(&mut rng)]).is_err());
        // n = 4 <= p + 2 = 4
        assert!(matches!(
            GroupedSample::new(
                vec![mk(&mut rng), mk(&mut rng)],
                vec![mk(&mut rng), mk(&mut rng)]
            ),
            Err(Error::TooFewForDimension { .. })
        ));
    }
}
