//! Parameter sweeps over one or two numeric parameters.

use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::observables::{
    spectrum_point_ae, spectrum_point_no_atom, spectrum_point_th_with, PointError, SpectrumPoint,
};
use crate::params::{validate, PhysicalParams, PARAM_KEYS};
use crate::th::{SolveOptions, Truncation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Th,
    Ae,
    Both,
    NoAtom,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Th => "th",
            Method::Ae => "ae",
            Method::Both => "both",
            Method::NoAtom => "no-atom",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "th" => Ok(Method::Th),
            "ae" => Ok(Method::Ae),
            "both" => Ok(Method::Both),
            "no-atom" | "no_atom" | "noatom" => Ok(Method::NoAtom),
            other => Err(format!("unknown method `{other}` (expected th, ae, both or no-atom)")),
        }
    }
}

/// Columns that can be requested, in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Observable {
    FluxA1,
    FluxB1,
    FluxA2,
    FluxB2,
    P1,
    P2,
    P3,
    G2A1A1,
    G2A2A2,
    G2A1A2,
}

impl Observable {
    pub const ALL: [Observable; 10] = [
        Observable::FluxA1,
        Observable::FluxB1,
        Observable::FluxA2,
        Observable::FluxB2,
        Observable::P1,
        Observable::P2,
        Observable::P3,
        Observable::G2A1A1,
        Observable::G2A2A2,
        Observable::G2A1A2,
    ];

    /// Everything except the correlations.
    pub const DEFAULT: [Observable; 7] = [
        Observable::FluxA1,
        Observable::FluxB1,
        Observable::FluxA2,
        Observable::FluxB2,
        Observable::P1,
        Observable::P2,
        Observable::P3,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Observable::FluxA1 => "F_a1",
            Observable::FluxB1 => "F_b1",
            Observable::FluxA2 => "F_a2",
            Observable::FluxB2 => "F_b2",
            Observable::P1 => "P1",
            Observable::P2 => "P2",
            Observable::P3 => "P3",
            Observable::G2A1A1 => "g2_a1a1",
            Observable::G2A2A2 => "g2_a2a2",
            Observable::G2A1A2 => "g2_a1a2",
        }
    }

    pub fn is_correlation(self) -> bool {
        matches!(self, Observable::G2A1A1 | Observable::G2A2A2 | Observable::G2A1A2)
    }

    pub fn read(self, p: &SpectrumPoint) -> f64 {
        let g2 = |k: usize| p.g2.map_or(f64::NAN, |g| g[k]);
        match self {
            Observable::FluxA1 => p.flux[0],
            Observable::FluxB1 => p.flux[1],
            Observable::FluxA2 => p.flux[2],
            Observable::FluxB2 => p.flux[3],
            Observable::P1 => p.populations[0],
            Observable::P2 => p.populations[1],
            Observable::P3 => p.populations[2],
            Observable::G2A1A1 => g2(0),
            Observable::G2A2A2 => g2(1),
            Observable::G2A1A2 => g2(2),
        }
    }
}

impl FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Observable::ALL
            .into_iter()
            .find(|o| o.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown observable `{s}`"))
    }
}

/// Parses a comma-separated observable list; the result is in output order.
pub fn parse_observables(list: &str) -> Result<Vec<Observable>, String> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "all" {
            out.extend(Observable::ALL);
        } else {
            out.push(item.parse()?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(name: &str, min: f64, max: f64, step: f64) -> Self {
        Axis { name: name.to_string(), min, max, step }
    }

    /// Grid `min, min + step, ...` up to `max` inclusive (with a small slack).
    pub fn values(&self) -> Vec<f64> {
        if !(self.step > 0.0) || self.max < self.min {
            return Vec::new();
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.min + k as f64 * self.step).collect()
    }
}

impl FromStr for Axis {
    type Err = ScanError;

    /// `NAME:MIN:MAX:STEP`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(ScanError::InvalidAxis(format!("`{s}`: expected NAME:MIN:MAX:STEP")));
        }
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| ScanError::InvalidAxis(format!("`{s}`: `{x}` is not a number")))
        };
        Ok(Axis::new(parts[0].trim(), num(parts[1])?, num(parts[2])?, num(parts[3])?))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.name, self.min, self.max, self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error("invalid axis: {0}")]
    InvalidAxis(String),
    #[error("unsatisfiable scan: {0}")]
    UnsatisfiableSpec(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub method: Method,
    pub base: PhysicalParams<f64>,
    pub axes: Vec<Axis>,
    pub observables: Vec<Observable>,
    /// Number of worker threads; 0 uses all cores.
    pub workers: usize,
    /// Name recorded in the output metadata.
    pub label: String,
    /// Photon truncation of the TH solver.
    pub truncation: Truncation,
}

impl ScanSpec {
    pub fn new(method: Method, base: PhysicalParams<f64>, axes: Vec<Axis>) -> Self {
        ScanSpec {
            method,
            base,
            axes,
            observables: Observable::DEFAULT.to_vec(),
            workers: 0,
            label: String::from("custom"),
            truncation: Truncation::default(),
        }
    }

    pub fn check(&self) -> Result<(), ScanError> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(ScanError::InvalidAxis(format!("expected 1 or 2 axes, got {}", self.axes.len())));
        }
        for axis in &self.axes {
            if !PARAM_KEYS.contains(&axis.name.as_str()) {
                return Err(ScanError::InvalidAxis(format!("unknown parameter `{}`", axis.name)));
            }
            let mut probe = self.base.clone();
            if probe.set_real(&axis.name, axis.min).is_err() {
                return Err(ScanError::InvalidAxis(format!("`{}` is not a numeric parameter", axis.name)));
            }
            if !(axis.step > 0.0 && axis.step.is_finite()) {
                return Err(ScanError::InvalidAxis(format!("`{axis}`: step must be positive")));
            }
            if !(axis.min.is_finite() && axis.max.is_finite()) {
                return Err(ScanError::InvalidAxis(format!("`{axis}`: bounds must be finite")));
            }
            if axis.values().is_empty() {
                return Err(ScanError::UnsatisfiableSpec(format!("axis `{axis}` has no points")));
            }
        }
        if self.axes.len() == 2 && self.axes[0].name == self.axes[1].name {
            return Err(ScanError::InvalidAxis(format!("axis `{}` given twice", self.axes[0].name)));
        }
        let wants_g2 = self.observables.iter().any(|o| o.is_correlation());
        if wants_g2 && !matches!(self.method, Method::Ae | Method::Both) {
            return Err(ScanError::UnsatisfiableSpec(
                "g2 needs two-photon states, which the one-photon truncation lacks; use --method ae or both"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Method prefixes used in column names.
    fn method_tags(&self) -> Vec<(Method, &'static str)> {
        match self.method {
            Method::Both => vec![(Method::Th, "TH_"), (Method::Ae, "AE_")],
            m => vec![(m, "")],
        }
    }

    pub fn columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (m, tag) in self.method_tags() {
            for o in &self.observables {
                if o.is_correlation() && m == Method::Th {
                    continue;
                }
                out.push(format!("{tag}{}", o.label()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
    pub residual: f64,
    /// `ok` or the error message of the failed evaluation.
    pub status: String,
}

impl Row {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub label: String,
    pub method: Method,
    /// Photon truncation of the TH solver.
    pub truncation: String,
    pub version: String,
    pub generated_unix: u64,
    pub elapsed_seconds: f64,
    pub max_residual: f64,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub axes: Vec<Axis>,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub metadata: Metadata,
    /// Parameters shared by every cell apart from the axes.
    pub base: PhysicalParams<f64>,
}

impl ResultTable {
    /// Points along each axis.
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values().len()).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(Row::is_ok)
    }
}

/// Evaluate one method at one parameter point.
pub fn evaluate(
    method: Method,
    params: &PhysicalParams<f64>,
    with_g2: bool,
    truncation: Truncation,
) -> Result<SpectrumPoint, PointError> {
    let v = validate(params.clone()).map_err(|e| PointError::InvalidParams(e.to_string()))?;
    match method {
        Method::Th => spectrum_point_th_with(&v, &SolveOptions { truncation, ..SolveOptions::default() }),
        Method::Ae => spectrum_point_ae(&v, with_g2),
        Method::NoAtom => spectrum_point_no_atom(&v),
        Method::Both => unreachable!("split into TH and AE by the caller"),
    }
}

fn evaluate_cell(spec: &ScanSpec, coords: &[f64]) -> Row {
    let mut params = spec.base.clone();
    for (axis, &x) in spec.axes.iter().zip(coords) {
        params.set_real(&axis.name, x).expect("axis names are checked");
    }
    let with_g2 = spec.observables.iter().any(|o| o.is_correlation());
    let mut values = Vec::new();
    let mut residual: f64 = 0.0;
    let mut status = String::from("ok");
    for (m, _) in spec.method_tags() {
        let wanted: Vec<Observable> = spec
            .observables
            .iter()
            .copied()
            .filter(|o| !(o.is_correlation() && m == Method::Th))
            .collect();
        match evaluate(m, &params, with_g2, spec.truncation) {
            Ok(p) => {
                values.extend(wanted.iter().map(|o| o.read(&p)));
                residual = residual.max(p.residual);
            }
            Err(e) => {
                values.extend(wanted.iter().map(|_| f64::NAN));
                if status == "ok" {
                    status = format!("{}: {e}", m.label());
                }
            }
        }
    }
    Row { coords: coords.to_vec(), values, residual, status }
}

/// Runs every grid cell; failures are recorded per row.
///
/// The first axis varies slowest. Output does not depend on `workers`.
pub fn run_scan(spec: &ScanSpec) -> Result<ResultTable, ScanError> {
    spec.check()?;
    let started = std::time::Instant::now();
    let grids: Vec<Vec<f64>> = spec.axes.iter().map(Axis::values).collect();
    let cells: Vec<Vec<f64>> = match grids.as_slice() {
        [x] => x.iter().map(|&a| vec![a]).collect(),
        [x, y] => x.iter().flat_map(|&a| y.iter().map(move |&b| vec![a, b])).collect(),
        _ => unreachable!("checked above"),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| ScanError::UnsatisfiableSpec(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<Row> = pool.install(|| cells.par_iter().map(|c| evaluate_cell(spec, c)).collect());

    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed", rows.len());
    }
    let metadata = Metadata {
        label: spec.label.clone(),
        method: spec.method,
        truncation: spec.truncation.label().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        generated_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
        failed_cells: failed,
    };
    Ok(ResultTable { axes: spec.axes.clone(), columns: spec.columns(), rows, metadata, base: spec.base.clone() })
}
