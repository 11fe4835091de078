//! Session parsing and locomotion signal derivation.
//!
//! A session is one recording's raw paired signals (a dopamine trace and a
//! position trace that may contain gaps) plus categorical labels. Position
//! gaps are filled by linear interpolation, velocity is the scaled first
//! difference of position, and acceleration the scaled first difference of
//! velocity. Signed acceleration is the default locomotion measure next to
//! velocity; absolute acceleration is derived and stored but excluded from
//! default analyses.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One recording session's raw signals and grouping labels.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub sample_rate_hz: f64,
    pub dopamine: Vec<f64>,
    /// `None` entries are gaps to be interpolated.
    pub position: Vec<Option<f64>>,
    pub labels: BTreeMap<String, String>,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        sample_rate_hz: f64,
        dopamine: Vec<f64>,
        position: Vec<Option<f64>>,
        labels: BTreeMap<String, String>,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: &str| Error::InvalidSession {
            id: id.clone(),
            reason: reason.to_string(),
        };
        if dopamine.len() != position.len() {
            return Err(invalid("dopamine and position lengths differ"));
        }
        if dopamine.len() < 2 {
            return Err(invalid("need at least 2 samples"));
        }
        if sample_rate_hz.is_nan() || sample_rate_hz <= 0.0 {
            return Err(invalid("sample_rate_hz must be positive"));
        }
        if labels.is_empty() {
            return Err(invalid("labels must be non-empty"));
        }
        Ok(Session {
            id,
            sample_rate_hz,
            dopamine,
            position,
            labels,
        })
    }

    /// Interpolate position and derive velocity and acceleration.
    pub fn derive(&self) -> Result<DerivedSignals> {
        let position = interpolate_position(&self.position)?;
        let velocity = derive_velocity(&position, self.sample_rate_hz)?;
        let (accel_signed, accel_abs) = derive_acceleration(&velocity, self.sample_rate_hz)?;
        Ok(DerivedSignals {
            velocity,
            accel_signed,
            accel_abs,
        })
    }
}

/// Gap-free locomotion signals derived from position.
#[derive(Debug, Clone)]
pub struct DerivedSignals {
    /// Length T-1.
    pub velocity: Vec<f64>,
    /// Length T-2.
    pub accel_signed: Vec<f64>,
    /// Elementwise magnitude of `accel_signed`.
    pub accel_abs: Vec<f64>,
}

/// Fill interior gap runs by linear interpolation between the nearest
/// present neighbors. Present values pass through unchanged; leading or
/// trailing gaps are an error.
pub fn interpolate_position(position: &[Option<f64>]) -> Result<Vec<f64>> {
    if position.iter().all(Option::is_none) {
        return Err(Error::EmptySignal);
    }
    if position.first().is_none_or(Option::is_none) {
        return Err(Error::UnboundedGap("leading"));
    }
    if position.last().is_some_and(Option::is_none) {
        return Err(Error::UnboundedGap("trailing"));
    }
    let mut out = Vec::with_capacity(position.len());
    let mut i = 0;
    while i < position.len() {
        match position[i] {
            Some(v) => {
                out.push(v);
                i += 1;
            }
            None => {
                // find run of gaps; both neighbors exist by the checks above
                let left = out[out.len() - 1];
                let mut j = i;
                while position[j].is_none() {
                    j += 1;
                }
                let right = position[j].unwrap();
                let run = (j - i) as f64 + 1.0;
                for k in 0..(j - i) {
                    out.push(left + (right - left) * (k as f64 + 1.0) / run);
                }
                i = j;
            }
        }
    }
    Ok(out)
}

/// First discrete difference of position scaled to position-units/second:
/// `v(t) = (pos(t+1) - pos(t)) * rate`, length T-1.
pub fn derive_velocity(position: &[f64], sample_rate_hz: f64) -> Result<Vec<f64>> {
    if position.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: position.len(),
        });
    }
    Ok(position
        .windows(2)
        .map(|w| (w[1] - w[0]) * sample_rate_hz)
        .collect())
}

/// First discrete difference of velocity scaled by the sample rate, plus
/// its elementwise magnitude.
pub fn derive_acceleration(
    velocity: &[f64],
    sample_rate_hz: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if velocity.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: velocity.len(),
        });
    }
    let signed: Vec<f64> = velocity
        .windows(2)
        .map(|w| (w[1] - w[0]) * sample_rate_hz)
        .collect();
    let abs = signed.iter().map(|a| a.abs()).collect();
    Ok((signed, abs))
}

/// One manifest row: where a session file lives and how it is labeled.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub session_id: String,
    pub file: PathBuf,
    pub sample_rate_hz: f64,
    pub labels: BTreeMap<String, String>,
}

/// Read a manifest CSV with header
/// `session_id,file,sample_rate_hz,region,sex,condition`. Relative file
/// paths are resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let display = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| map_csv_err(&display, e))?;
    let headers = rdr
        .headers()
        .map_err(|e| map_csv_err(&display, e))?
        .clone();
    let expected = ["session_id", "file", "sample_rate_hz", "region", "sex", "condition"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::parse(
            &display,
            format!("expected header {expected:?}, got {got:?}"),
        ));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| map_csv_err(&display, e))?;
        let row = i + 2;
        let field = |j: usize| rec.get(j).unwrap_or("").trim().to_string();
        let rate: f64 = field(2)
            .parse()
            .map_err(|_| Error::parse(&display, format!("row {row}: bad sample_rate_hz")))?;
        let mut labels = BTreeMap::new();
        labels.insert("region".to_string(), field(3));
        labels.insert("sex".to_string(), field(4));
        labels.insert("condition".to_string(), field(5));
        let file = base.join(field(1));
        entries.push(ManifestEntry {
            session_id: field(0),
            file,
            sample_rate_hz: rate,
            labels,
        });
    }
    if entries.is_empty() {
        return Err(Error::parse(&display, "manifest has no sessions"));
    }
    Ok(entries)
}

/// Raw session rows: time stamp, dopamine, optionally missing position.
#[derive(Debug, Clone)]
pub struct RawRows {
    pub t: Vec<f64>,
    pub dopamine: Vec<f64>,
    pub position: Vec<Option<f64>>,
}

/// Read a session CSV with header `t,dopamine,position`; an empty position
/// cell is a gap. Any unparseable row fails the whole session. An optional
/// `[start, end]` window (in the file's `t` units) trims rows before
/// derivation.
pub fn read_session_csv(path: &Path, window: Option<(f64, f64)>) -> Result<RawRows> {
    let display = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| map_csv_err(&display, e))?;
    let headers = rdr
        .headers()
        .map_err(|e| map_csv_err(&display, e))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != ["t", "dopamine", "position"] {
        return Err(Error::parse(
            &display,
            format!("expected header [t, dopamine, position], got {got:?}"),
        ));
    }
    let mut rows = RawRows {
        t: Vec::new(),
        dopamine: Vec::new(),
        position: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| map_csv_err(&display, e))?;
        let row = i + 2;
        let t: f64 = rec
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, format!("row {row}: bad t")))?;
        if let Some((start, end)) = window {
            if t < start || t > end {
                continue;
            }
        }
        let dop: f64 = rec
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, format!("row {row}: bad dopamine")))?;
        let pos_field = rec.get(2).unwrap_or("").trim();
        let pos = if pos_field.is_empty() {
            None
        } else {
            Some(pos_field.parse().map_err(|_| {
                Error::parse(&display, format!("row {row}: bad position"))
            })?)
        };
        rows.t.push(t);
        rows.dopamine.push(dop);
        rows.position.push(pos);
    }
    Ok(rows)
}

fn map_csv_err(path: &str, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::parse(path, e.to_string())
    }
}
