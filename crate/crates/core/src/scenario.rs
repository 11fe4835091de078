//! Scenario specs for the `simulate` subcommand.
//!
//! A scenario JSON describes either a Gaussian-process curve population or
//! a VAR(1) time-series population, split into labeled groups. Emitting a
//! scenario writes a manifest plus per-session files in the same CSV
//! formats the ingest path consumes, so simulated datasets round-trip
//! through `test` unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LagGrid;
use crate::seed::derive_seed;
use crate::simulate::{simulate_gp_sample, simulate_var1_path, GpSpec, SqExpKernel, Var1Spec};

/// Group mean shift applied on top of a zero baseline.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum MeanShift {
    #[default]
    None,
    /// Constant shift of one measure across the whole lag domain.
    Broad {
        amplitude: f64,
        #[serde(default)]
        measure: usize,
    },
    /// Shift at the single grid lag nearest `center_lag`.
    Bump {
        amplitude: f64,
        center_lag: f64,
        #[serde(default)]
        measure: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub labels: BTreeMap<String, String>,
    pub n: usize,
    #[serde(default)]
    pub mean_shift: MeanShift,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpScenario {
    pub grid: LagGrid,
    pub measures: Vec<String>,
    pub kernel: SqExpKernel,
    pub cross_measure_corr: f64,
    pub groups: Vec<GroupSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Var1Scenario {
    pub a: [[f64; 2]; 2],
    pub sigma: [[f64; 2]; 2],
    pub len: usize,
    pub sample_rate_hz: f64,
    pub groups: Vec<GroupSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Gp(GpScenario),
    Var1(Var1Scenario),
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Scenario> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let scenario: Scenario = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidScenario(format!("{}: {e}", path.display())))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let groups = match self {
            Scenario::Gp(s) => &s.groups,
            Scenario::Var1(s) => &s.groups,
        };
        if groups.is_empty() {
            return Err(Error::InvalidScenario("no groups".to_string()));
        }
        if groups.iter().any(|g| g.n == 0) {
            return Err(Error::InvalidScenario("group with n = 0".to_string()));
        }
        match self {
            Scenario::Gp(s) => {
                if s.measures.is_empty() {
                    return Err(Error::InvalidScenario("no measures".to_string()));
                }
                for g in &s.groups {
                    let measure = match g.mean_shift {
                        MeanShift::None => None,
                        MeanShift::Broad { measure, .. } => Some(measure),
                        MeanShift::Bump { measure, .. } => Some(measure),
                    };
                    if let Some(m) = measure {
                        if m >= s.measures.len() {
                            return Err(Error::InvalidScenario(format!(
                                "mean_shift measure index {m} out of range"
                            )));
                        }
                    }
                }
            }
            Scenario::Var1(s) => {
                if s.groups.iter().any(|g| g.mean_shift != MeanShift::None) {
                    return Err(Error::InvalidScenario(
                        "mean_shift is only supported for GP scenarios".to_string(),
                    ));
                }
                // stationarity and shape checks
                let spec = Var1Spec {
                    a: s.a,
                    sigma: s.sigma,
                    len: s.len,
                    sample_rate_hz: s.sample_rate_hz,
                    burn_in: None,
                };
                spec.stationary_covariance()?;
            }
        }
        Ok(())
    }

    /// Write `manifest.csv` and one session file per simulated session
    /// into `out_dir`. Returns the manifest path.
    pub fn emit(&self, out_dir: &Path) -> Result<PathBuf> {
        self.validate()?;
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        let mut manifest_rows = Vec::new();
        match self {
            Scenario::Gp(s) => {
                let p = s.measures.len();
                let m = s.grid.len();
                for (gi, group) in s.groups.iter().enumerate() {
                    let mut mean = vec![vec![0.0; m]; p];
                    apply_shift(&mut mean, &s.grid, group.mean_shift);
                    let spec = GpSpec::new(
                        s.grid.clone(),
                        mean,
                        s.measures.clone(),
                        s.kernel,
                        s.cross_measure_corr,
                    )?;
                    let draws =
                        simulate_gp_sample(&spec, group.n, derive_seed(s.seed, "group", gi as u64))?;
                    for (si, draw) in draws.iter().enumerate() {
                        let id = format!("g{gi}_s{si}");
                        let file = format!("{id}.csv");
                        write_curve_session(&out_dir.join(&file), &s.grid, &s.measures, &draw.curves)?;
                        manifest_rows.push((id, file, 20.0, group.labels.clone()));
                    }
                }
            }
            Scenario::Var1(s) => {
                let mut session_index = 0u64;
                for (gi, group) in s.groups.iter().enumerate() {
                    for si in 0..group.n {
                        let spec = Var1Spec {
                            a: s.a,
                            sigma: s.sigma,
                            len: s.len,
                            sample_rate_hz: s.sample_rate_hz,
                            burn_in: None,
                        };
                        let (x, y) =
                            simulate_var1_path(&spec, derive_seed(s.seed, "session", session_index))?;
                        session_index += 1;
                        let id = format!("g{gi}_s{si}");
                        let file = format!("{id}.csv");
                        write_raw_session(&out_dir.join(&file), &x, &y, s.sample_rate_hz)?;
                        manifest_rows.push((id, file, s.sample_rate_hz, group.labels.clone()));
                    }
                }
            }
        }
        let manifest_path = out_dir.join("manifest.csv");
        let mut out = String::from("session_id,file,sample_rate_hz,region,sex,condition\n");
        for (id, file, rate, labels) in &manifest_rows {
            let get = |k: &str| labels.get(k).map(String::as_str).unwrap_or("NA");
            out.push_str(&format!(
                "{id},{file},{rate},{},{},{}\n",
                get("region"),
                get("sex"),
                get("condition")
            ));
        }
        fs::write(&manifest_path, out)
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        Ok(manifest_path)
    }
}

fn apply_shift(mean: &mut [Vec<f64>], grid: &LagGrid, shift: MeanShift) {
    match shift {
        MeanShift::None => {}
        MeanShift::Broad { amplitude, measure } => {
            for v in &mut mean[measure] {
                *v += amplitude;
            }
        }
        MeanShift::Bump {
            amplitude,
            center_lag,
            measure,
        } => {
            let idx = grid
                .values()
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - center_lag).abs().total_cmp(&(b.1 - center_lag).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            mean[measure][idx] += amplitude;
        }
    }
}

fn write_curve_session(
    path: &Path,
    grid: &LagGrid,
    measures: &[String],
    curves: &[Vec<f64>],
) -> Result<()> {
    let mut buf = Vec::new();
    write!(buf, "lag_seconds").unwrap();
    for m in measures {
        write!(buf, ",{m}").unwrap();
    }
    writeln!(buf).unwrap();
    for (j, h) in grid.values().iter().enumerate() {
        write!(buf, "{h}").unwrap();
        for row in curves {
            write!(buf, ",{}", row[j]).unwrap();
        }
        writeln!(buf).unwrap();
    }
    fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Raw session file: dopamine is the first VAR component; position is the
/// running sum of the second component divided by the rate (summing up to
/// and including the current sample), so the derived velocity reproduces
/// the second component with contemporaneous alignment.
fn write_raw_session(path: &Path, x: &[f64], y: &[f64], rate: f64) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "t,dopamine,position").unwrap();
    let mut pos = 0.0;
    for (i, (xv, yv)) in x.iter().zip(y).enumerate() {
        pos += yv / rate;
        let t = i as f64 / rate;
        writeln!(buf, "{t},{xv},{pos}").unwrap();
    }
    fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccf::CovDivisor;
    use crate::pipeline::Dataset;
    use crate::simulate::theoretical_var1_ccf;

    fn gp_scenario(scale: f64, shift: MeanShift) -> Scenario {
        Scenario::Gp(GpScenario {
            grid: LagGrid::default_grid(),
            measures: vec!["velocity".to_string(), "accel_signed".to_string()],
            kernel: SqExpKernel {
                length_scale: 0.3,
                scale,
            },
            cross_measure_corr: 0.3,
            groups: vec![
                GroupSpec {
                    labels: BTreeMap::from([("region".to_string(), "NAc".to_string())]),
                    n: 5,
                    mean_shift: MeanShift::None,
                },
                GroupSpec {
                    labels: BTreeMap::from([("region".to_string(), "DS".to_string())]),
                    n: 5,
                    mean_shift: shift,
                },
            ],
            seed: 21,
        })
    }

    #[test]
    fn gp_roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = gp_scenario(0.02, MeanShift::None);
        let manifest = scenario.emit(dir.path()).unwrap();
        let grid = LagGrid::default_grid();
        let measures = vec!["velocity".to_string(), "accel_signed".to_string()];
        let ds = Dataset::load(&manifest, &grid, &measures, None, CovDivisor::FullLength).unwrap();
        assert_eq!(ds.sessions.len(), 10);
        // regenerate the same draws and compare: shortest-roundtrip float
        // formatting makes the CSV round-trip exact
        if let Scenario::Gp(s) = &scenario {
            let spec = GpSpec::new(
                s.grid.clone(),
                vec![vec![0.0; 41]; 2],
                s.measures.clone(),
                s.kernel,
                s.cross_measure_corr,
            )
            .unwrap();
            let draws = simulate_gp_sample(&spec, 5, derive_seed(s.seed, "group", 0)).unwrap();
            for (si, draw) in draws.iter().enumerate() {
                let sess = ds.session(&format!("g0_s{si}")).unwrap();
                for (k, m) in s.measures.iter().enumerate() {
                    assert_eq!(sess.curves[m], draw.curves[k]);
                }
            }
        }
    }

    #[test]
    fn var1_emission_reparses_and_matches_theory() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = Scenario::Var1(Var1Scenario {
            a: [[0.5, 0.2], [-0.1, 0.6]],
            sigma: [[1.0, 0.4], [0.4, 1.0]],
            len: 20_000,
            sample_rate_hz: 20.0,
            groups: vec![GroupSpec {
                labels: BTreeMap::from([("region".to_string(), "NAc".to_string())]),
                n: 2,
                mean_shift: MeanShift::None,
            }],
            seed: 5,
        });
        let manifest = scenario.emit(dir.path()).unwrap();
        let grid = LagGrid::default_grid();
        let measures = vec!["velocity".to_string()];
        let ds = Dataset::load(&manifest, &grid, &measures, None, CovDivisor::FullLength).unwrap();
        let spec = Var1Spec {
            a: [[0.5, 0.2], [-0.1, 0.6]],
            sigma: [[1.0, 0.4], [0.4, 1.0]],
            len: 20_000,
            sample_rate_hz: 20.0,
            burn_in: None,
        };
        let theory = theoretical_var1_ccf(&spec, &grid).unwrap();
        let curve = ds.curve("g0_s0", "velocity").unwrap();
        for (e, t) in curve.rho.iter().zip(&theory.rho) {
            assert!((e - t).abs() < 0.05, "{e} vs {t}");
        }
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let s = Scenario::Gp(GpScenario {
            grid: LagGrid::default_grid(),
            measures: vec![],
            kernel: SqExpKernel {
                length_scale: 0.3,
                scale: 0.02,
            },
            cross_measure_corr: 0.0,
            groups: vec![],
            seed: 0,
        });
        assert!(s.validate().is_err());
        let s = Scenario::Var1(Var1Scenario {
            a: [[1.2, 0.0], [0.0, 0.5]],
            sigma: [[1.0, 0.0], [0.0, 1.0]],
            len: 100,
            sample_rate_hz: 20.0,
            groups: vec![GroupSpec {
                labels: BTreeMap::new(),
                n: 2,
                mean_shift: MeanShift::None,
            }],
            seed: 0,
        });
        assert!(matches!(s.validate(), Err(Error::Nonstationary(_))));
    }

    #[test]
    fn bump_lands_on_nearest_grid_point() {
        let grid = LagGrid::default_grid();
        let mut mean = vec![vec![0.0; 41]];
        apply_shift(
            &mut mean,
            &grid,
            MeanShift::Bump {
                amplitude: 2.0,
                center_lag: 0.52,
                measure: 0,
            },
        );
        // 0.52 is nearest to grid lag 0.50 (index 30)
        assert_eq!(mean[0][30], 2.0);
        assert_eq!(mean[0].iter().filter(|v| **v != 0.0).count(), 1);
    }
}
