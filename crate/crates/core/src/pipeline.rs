//! End-to-end comparison pipeline: load a labeled dataset, resolve a
//! factor query into two disjoint session groups, and run the global
//! tests.
//!
//! Factor queries use a small grammar covering the comparison shapes that
//! arise in grouped designs:
//!
//! ```text
//! region=NAc vs DS                 level vs level
//! condition=Lipid vs rest          level vs rest
//! sex=F vs M | region=NAc          stratified comparison
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ccf::{ccf_curve_with, CcfCurve, CovDivisor};
use crate::error::{Error, Result};
use crate::funcsample::{
    covariance_trace_ratio, pooled_covariance, GroupedSample, MultiCurveSample,
};
use crate::globaltests::{
    bootstrap_global, f_int_with, f_max, hotelling_pointwise, permutation_test_with,
    ws_calibrate, ws_pvalue, GlobalStatistic, PointwiseCurve, Quadrature, WsCalibration,
};
use crate::grid::LagGrid;
use crate::ingest::{read_manifest, read_session_csv, Session};

/// Raw measures that can be derived from a session's signals.
pub const RAW_MEASURES: [&str; 4] = ["velocity", "accel_signed", "accel_abs", "dopamine"];

/// One session reduced to its per-measure CCF curves plus labels.
#[derive(Debug, Clone)]
pub struct SessionCurves {
    pub id: String,
    pub labels: BTreeMap<String, String>,
    /// measure name -> rho values on the dataset grid
    pub curves: BTreeMap<String, Vec<f64>>,
}

/// A loaded dataset: all sessions' curves on one shared grid.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub grid: LagGrid,
    pub sessions: Vec<SessionCurves>,
}

impl Dataset {
    /// Load every session named in the manifest and estimate the requested
    /// measures' CCF curves. Session files may be raw recordings
    /// (`t,dopamine,position`) or precomputed curves
    /// (`lag_seconds,<measure>,...`); the two are distinguished by header.
    pub fn load(
        manifest_path: &Path,
        grid: &LagGrid,
        measures: &[String],
        window: Option<(f64, f64)>,
        divisor: CovDivisor,
    ) -> Result<Dataset> {
        if measures.is_empty() {
            return Err(Error::NothingToDo("no measures requested"));
        }
        let entries = read_manifest(manifest_path)?;
        let mut sessions = Vec::with_capacity(entries.len());
        for entry in &entries {
            let header = peek_header(&entry.file)?;
            let curves = if header.first().map(String::as_str) == Some("lag_seconds") {
                load_curve_file(&entry.file, grid, measures)?
            } else {
                let rows = read_session_csv(&entry.file, window)?;
                let session = Session::new(
                    entry.session_id.clone(),
                    entry.sample_rate_hz,
                    rows.dopamine,
                    rows.position,
                    entry.labels.clone(),
                )?;
                derive_curves(&session, grid, measures, divisor)?
            };
            sessions.push(SessionCurves {
                id: entry.session_id.clone(),
                labels: entry.labels.clone(),
                curves,
            });
        }
        Ok(Dataset {
            grid: grid.clone(),
            sessions,
        })
    }

    /// Assemble a dataset from in-memory curve samples plus per-session labels.
    pub fn from_samples(
        samples: Vec<MultiCurveSample>,
        labels: Vec<BTreeMap<String, String>>,
    ) -> Result<Dataset> {
        let grid = match samples.first() {
            Some(s) => s.grid.clone(),
            None => return Err(Error::NothingToDo("no sessions")),
        };
        let sessions = samples
            .into_iter()
            .zip(labels)
            .map(|(s, labels)| SessionCurves {
                id: s.session_id.clone(),
                labels,
                curves: s
                    .measures
                    .iter()
                    .cloned()
                    .zip(s.curves)
                    .collect(),
            })
            .collect();
        Ok(Dataset { grid, sessions })
    }

    pub fn session(&self, id: &str) -> Option<&SessionCurves> {
        self.sessions.iter().find(|s| s.id == id)
    }

    pub fn curve(&self, session_id: &str, measure: &str) -> Result<CcfCurve> {
        let session = self
            .session(session_id)
            .ok_or_else(|| Error::UnknownSession(session_id.to_string()))?;
        let rho = session
            .curves
            .get(measure)
            .ok_or_else(|| Error::UnknownMeasure(measure.to_string()))?;
        Ok(CcfCurve {
            grid: self.grid.clone(),
            rho: rho.clone(),
        })
    }
}

fn peek_header(path: &Path) -> Result<Vec<String>> {
    let mut rdr =
        csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path.display().to_string(), io),
            other => Error::parse(path.display().to_string(), format!("{other:?}")),
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    Ok(headers.iter().map(|h| h.trim().to_string()).collect())
}

/// Estimate CCF(dopamine, measure) for each requested measure. The
/// dopamine series is tail-truncated to each derived measure's length so
/// the pairing stays contemporaneous.
fn derive_curves(
    session: &Session,
    grid: &LagGrid,
    measures: &[String],
    divisor: CovDivisor,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let derived = session.derive()?;
    let mut out = BTreeMap::new();
    for measure in measures {
        let series: &[f64] = match measure.as_str() {
            "velocity" => &derived.velocity,
            "accel_signed" => &derived.accel_signed,
            "accel_abs" => &derived.accel_abs,
            "dopamine" => &session.dopamine,
            _ => return Err(Error::UnknownMeasure(measure.clone())),
        };
        let dop = &session.dopamine[session.dopamine.len() - series.len()..];
        let curve = ccf_curve_with(dop, series, grid, session.sample_rate_hz, divisor)?;
        out.insert(measure.clone(), curve.rho);
    }
    Ok(out)
}

fn load_curve_file(
    path: &Path,
    grid: &LagGrid,
    measures: &[String],
) -> Result<BTreeMap<String, Vec<f64>>> {
    let display = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&display, io),
        other => Error::parse(&display, format!("{other:?}")),
    })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(&display, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut col_of = BTreeMap::new();
    for m in measures {
        let idx = headers
            .iter()
            .position(|h| h == m)
            .ok_or_else(|| Error::parse(&display, format!("missing measure column `{m}`")))?;
        col_of.insert(m.clone(), idx);
    }
    let mut lags = Vec::new();
    let mut cols: BTreeMap<String, Vec<f64>> =
        measures.iter().map(|m| (m.clone(), Vec::new())).collect();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(&display, e.to_string()))?;
        let row = i + 2;
        let parse = |j: usize| -> Result<f64> {
            rec.get(j)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::parse(&display, format!("row {row}: bad number")))
        };
        lags.push(parse(0)?);
        for (m, idx) in &col_of {
            cols.get_mut(m).unwrap().push(parse(*idx)?);
        }
    }
    if lags.len() != grid.len() {
        return Err(Error::parse(
            &display,
            format!("curve has {} lags, grid has {}", lags.len(), grid.len()),
        ));
    }
    for (got, want) in lags.iter().zip(grid.values()) {
        if (got - want).abs() > 1e-9 {
            return Err(Error::parse(
                &display,
                format!("curve lag {got} does not match grid lag {want}"),
            ));
        }
    }
    Ok(cols)
}

/// Which sessions land on the right side of a comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryRight {
    Level(String),
    Rest,
}

/// A parsed factor query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorQuery {
    raw: String,
    pub factor: String,
    pub left: String,
    pub right: QueryRight,
    pub stratum: Option<(String, String)>,
}

impl fmt::Display for FactorQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl FromStr for FactorQuery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidQuery {
            query: s.to_string(),
            reason: reason.to_string(),
        };
        let (main, stratum_part) = match s.split_once('|') {
            Some((m, st)) => (m.trim(), Some(st.trim())),
            None => (s.trim(), None),
        };
        let (factor, rest) = main.split_once('=').ok_or_else(|| bad("missing `=`"))?;
        let (left, right) = rest
            .split_once(" vs ")
            .ok_or_else(|| bad("missing ` vs `"))?;
        let factor = factor.trim().to_string();
        let left = left.trim().to_string();
        let right = right.trim();
        if factor.is_empty() || left.is_empty() || right.is_empty() {
            return Err(bad("empty factor or level"));
        }
        let right = if right == "rest" {
            QueryRight::Rest
        } else {
            QueryRight::Level(right.to_string())
        };
        let stratum = match stratum_part {
            None => None,
            Some(st) => {
                let (f, l) = st.split_once('=').ok_or_else(|| bad("bad stratum"))?;
                let (f, l) = (f.trim(), l.trim());
                if f.is_empty() || l.is_empty() {
                    return Err(bad("bad stratum"));
                }
                Some((f.to_string(), l.to_string()))
            }
        };
        Ok(FactorQuery {
            raw: s.trim().to_string(),
            factor,
            left,
            right,
            stratum,
        })
    }
}

impl FactorQuery {
    /// Split the dataset's sessions into the two comparison groups.
    /// The sides are disjoint by construction except when both sides name
    /// the same level, which is rejected. Each side must have at least 3
    /// sessions.
    pub fn resolve<'a>(
        &self,
        dataset: &'a Dataset,
    ) -> Result<(Vec<&'a SessionCurves>, Vec<&'a SessionCurves>)> {
        if let QueryRight::Level(level) = &self.right {
            if *level == self.left {
                return Err(Error::OverlappingGroups(self.raw.clone()));
            }
        }
        let in_stratum = |s: &SessionCurves| match &self.stratum {
            None => true,
            Some((f, l)) => s.labels.get(f).map(String::as_str) == Some(l.as_str()),
        };
        let mut group1 = Vec::new();
        let mut group2 = Vec::new();
        for s in dataset.sessions.iter().filter(|s| in_stratum(s)) {
            match s.labels.get(&self.factor) {
                Some(v) if *v == self.left => group1.push(s),
                Some(v) => match &self.right {
                    QueryRight::Level(level) if v == level => group2.push(s),
                    QueryRight::Rest => group2.push(s),
                    _ => {}
                },
                None => {}
            }
        }
        for (side, group) in [("left", &group1), ("right", &group2)] {
            if group.len() < 3 {
                return Err(Error::UnderpoweredComparison {
                    group: format!("{side} side of `{}`", self.raw),
                    n: group.len(),
                });
            }
        }
        Ok((group1, group2))
    }
}

/// Knobs for one comparison run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub bootstrap_b: usize,
    /// 0 disables the permutation cross-check.
    pub permutation_r: usize,
    pub seed: u64,
    pub quadrature: Quadrature,
    /// Cap on bootstrap work (replicates times sessions).
    pub work_limit: Option<u64>,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            bootstrap_b: 1000,
            permutation_r: 0,
            seed: 0,
            quadrature: Quadrature::Trapezoid,
            work_limit: None,
        }
    }
}

/// Full result of one comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub comparison: String,
    pub measures: Vec<String>,
    pub f_int: f64,
    pub p_int: f64,
    pub f_max: f64,
    pub p_max: f64,
    pub arg_max_lag: f64,
    pub pointwise: PointwiseCurve,
    pub calibration: WsCalibration,
    pub bootstrap_b: usize,
    pub seed: u64,
    /// Bootstrap p-value for `F_int`, a consistency diagnostic next to the
    /// analytic `p_int`; never the primary calibration.
    pub p_int_bootstrap: f64,
    /// Permutation cross-checks, present when `permutation_r > 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_int_perm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max_perm: Option<f64>,
    /// Group-1 over group-2 within-group covariance trace ratio; values far
    /// from 1 flag the common-covariance assumption.
    pub cov_trace_ratio: f64,
    pub n1: usize,
    pub n2: usize,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }
}

/// Build the grouped functional sample for a resolved comparison.
pub fn assemble_groups(
    grid: &LagGrid,
    group1: &[&SessionCurves],
    group2: &[&SessionCurves],
    measures: &[String],
) -> Result<GroupedSample> {
    let build = |sessions: &[&SessionCurves]| -> Result<Vec<MultiCurveSample>> {
        sessions
            .iter()
            .map(|s| {
                let curves = measures
                    .iter()
                    .map(|m| {
                        s.curves
                            .get(m)
                            .cloned()
                            .ok_or_else(|| Error::UnknownMeasure(m.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                MultiCurveSample::new(&s.id, grid.clone(), measures.to_vec(), curves)
            })
            .collect()
    };
    GroupedSample::new(build(group1)?, build(group2)?)
}

/// Run the full pipeline for one factor query: group resolution, pooled
/// covariance, global statistics, analytic and bootstrap calibration, and
/// optional permutation cross-checks.
pub fn run_comparison(
    dataset: &Dataset,
    query: &FactorQuery,
    measures: &[String],
    cfg: &ComparisonConfig,
) -> Result<TestReport> {
    let (group1, group2) = query.resolve(dataset)?;
    let g = assemble_groups(&dataset.grid, &group1, &group2, measures)?;

    let cov = pooled_covariance(&g)?;
    let pointwise = hotelling_pointwise(&g, &cov)?;
    let f_int_value = f_int_with(&pointwise, cfg.quadrature);
    let (f_max_value, arg_max_lag) = f_max(&pointwise);

    let calibration = ws_calibrate(&cov)?;
    let p_int = ws_pvalue(f_int_value, &calibration)?;

    let boot = bootstrap_global(&g, cfg.bootstrap_b, cfg.seed, cfg.quadrature, cfg.work_limit)?;

    let (p_int_perm, p_max_perm) = if cfg.permutation_r > 0 {
        let pi = permutation_test_with(
            &g,
            GlobalStatistic::FInt,
            cfg.permutation_r,
            cfg.seed,
            cfg.quadrature,
        )?;
        let pm = permutation_test_with(
            &g,
            GlobalStatistic::FMax,
            cfg.permutation_r,
            cfg.seed,
            cfg.quadrature,
        )?;
        (Some(pi.p_value), Some(pm.p_value))
    } else {
        (None, None)
    };

    Ok(TestReport {
        comparison: query.to_string(),
        measures: measures.to_vec(),
        f_int: f_int_value,
        p_int,
        f_max: f_max_value,
        p_max: boot.fmax.p_value,
        arg_max_lag,
        pointwise,
        calibration,
        bootstrap_b: cfg.bootstrap_b,
        seed: cfg.seed,
        p_int_bootstrap: boot.fint.p_value,
        p_int_perm,
        p_max_perm,
        cov_trace_ratio: covariance_trace_ratio(&g),
        n1: g.n1(),
        n2: g.n2(),
    })
}

/// Combined results CSV shaped like a comparison table:
/// `comparison,measures,f_int,p_int,f_max,p_max`.
pub fn write_results_csv<W: Write>(mut w: W, reports: &[TestReport]) -> std::io::Result<()> {
    writeln!(w, "comparison,measures,f_int,p_int,f_max,p_max")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            csv_quote(&r.comparison),
            r.measures.join("+"),
            r.f_int,
            r.p_int,
            r.f_max,
            r.p_max
        )?;
    }
    Ok(())
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pointwise curve as `lag_seconds,t_n` plot data.
pub fn write_pointwise_csv<W: Write>(mut w: W, pw: &PointwiseCurve) -> std::io::Result<()> {
    writeln!(w, "lag_seconds,t_n")?;
    for (h, t) in pw.grid.values().iter().zip(&pw.t_values) {
        writeln!(w, "{h},{t}")?;
    }
    Ok(())
}

/// CCF curve as `lag_seconds,rho` plot data.
pub fn write_curve_csv<W: Write>(mut w: W, curve: &CcfCurve) -> std::io::Result<()> {
    writeln!(w, "lag_seconds,rho")?;
    for (h, r) in curve.grid.values().iter().zip(&curve.rho) {
        writeln!(w, "{h},{r}")?;
    }
    Ok(())
}
