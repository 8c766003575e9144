//! Writers for scan results: CSV, JSON and SVG plots.
//!
//! Every file is written to a temporary sibling first and renamed into
//! place, so readers never observe a partial file.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::scan::{ResultTable, Row};

pub const JSON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EmitError> {
    let fail = |source| EmitError::IoFailure { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

/// CSV text: one `#` metadata line, a header, then one row per cell.
///
/// Columns are the axis parameters, the selected observables, `residual`
/// and `status`.
pub fn to_csv(table: &ResultTable) -> String {
    let m = &table.metadata;
    let mut out = String::new();
    let axes: Vec<String> = table.axes.iter().map(|a| a.to_string()).collect();
    let _ = writeln!(
        out,
        "# wgmsim {} label={} method={} truncation={} axes={} generated_unix={}",
        m.version,
        m.label,
        m.method.label(),
        m.truncation,
        axes.join(","),
        m.generated_unix
    );
    let mut header: Vec<&str> = table.axes.iter().map(|a| a.name.as_str()).collect();
    header.extend(table.columns.iter().map(String::as_str));
    header.push("residual");
    header.push("status");
    let _ = writeln!(out, "{}", header.join(","));
    for row in &table.rows {
        let mut fields: Vec<String> = row.coords.iter().map(|&x| number(x)).collect();
        fields.extend(row.values.iter().map(|&x| number(x)));
        fields.push(number(row.residual));
        fields.push(csv_field(&row.status));
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct JsonRow<'a> {
    coords: &'a [f64],
    values: Vec<Option<f64>>,
    residual: Option<f64>,
    status: &'a str,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    schema_version: u32,
    metadata: &'a crate::scan::Metadata,
    base: &'a crate::params::PhysicalParams<f64>,
    axes: &'a [crate::scan::Axis],
    columns: &'a [String],
    rows: Vec<JsonRow<'a>>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// JSON document; non-finite values become `null`.
pub fn to_json(table: &ResultTable) -> String {
    let rows = table
        .rows
        .iter()
        .map(|r: &Row| JsonRow {
            coords: &r.coords,
            values: r.values.iter().map(|&v| finite(v)).collect(),
            residual: finite(r.residual),
            status: &r.status,
        })
        .collect();
    let doc = JsonTable {
        schema_version: JSON_SCHEMA_VERSION,
        metadata: &table.metadata,
        base: &table.base,
        axes: &table.axes,
        columns: &table.columns,
        rows,
    };
    serde_json::to_string_pretty(&doc).expect("table serializes")
}

const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\">{}</text>\n",
        LEFT + (W - LEFT - RIGHT) / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(out: &mut String, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) {
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let _ = writeln!(
        out,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let px = LEFT + f * pw;
        let py = TOP + ph - f * ph;
        let _ = writeln!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            TOP + ph + 16.0,
            tick(x.0 + f * (x.1 - x.0))
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            LEFT - 6.0,
            py + 4.0,
            tick(y.0 + f * (y.1 - y.0))
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        LEFT + pw / 2.0,
        H - 10.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Line plot of every column against the single axis.
pub fn line_svg(table: &ResultTable) -> String {
    let axis = &table.axes[0];
    let xs: Vec<f64> = table.rows.iter().map(|r| r.coords[0]).collect();
    let x = range(xs.iter().copied());
    let y = range(table.rows.iter().flat_map(|r| r.values.iter().copied()));
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |v: f64| LEFT + (v - x.0) / (x.1 - x.0) * pw;
    let py = |v: f64| TOP + ph - (v - y.0) / (y.1 - y.0) * ph;

    let mut out = svg_open(&table.metadata.label);
    frame(&mut out, x, y, &axis.name, "value");
    for (k, name) in table.columns.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        // Break the polyline at non-finite values.
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (xv, row) in xs.iter().zip(&table.rows) {
            let v = row.values[k];
            if v.is_finite() {
                segments.last_mut().expect("non-empty").push((px(*xv), py(v)));
            } else if !segments.last().expect("non-empty").is_empty() {
                segments.push(Vec::new());
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let pts: Vec<String> = seg.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                pts.join(" ")
            );
        }
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\
             <text x=\"{}\" y=\"{}\">{}</text>",
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Viridis-like ramp from dark blue to yellow.
fn color(t: f64) -> String {
    let stops = [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let k = (t.floor() as usize).min(stops.len() - 2);
    let f = t - k as f64;
    let mix = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    let (a, b) = (stops[k], stops[k + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of column `col` over a two-axis table. Non-finite cells are grey.
pub fn heatmap_svg(table: &ResultTable, col: usize) -> String {
    let shape = table.shape();
    let (nx, ny) = (shape[0], shape[1]);
    let xs = table.axes[0].values();
    let ys = table.axes[1].values();
    let x = (xs[0] - table.axes[0].step / 2.0, xs[nx - 1] + table.axes[0].step / 2.0);
    let y = (ys[0] - table.axes[1].step / 2.0, ys[ny - 1] + table.axes[1].step / 2.0);
    let z = range(table.rows.iter().map(|r| r.values[col]));
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let cw = pw / nx as f64;
    let ch = ph / ny as f64;

    let mut out = svg_open(&format!("{}: {}", table.metadata.label, table.columns[col]));
    for (idx, row) in table.rows.iter().enumerate() {
        let (i, j) = (idx / ny, idx % ny);
        let v = row.values[col];
        let fill = if v.is_finite() { color((v - z.0) / (z.1 - z.0)) } else { "#bbbbbb".into() };
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
            LEFT + i as f64 * cw,
            TOP + ph - (j + 1) as f64 * ch,
            cw + 0.05,
            ch + 0.05
        );
    }
    frame(&mut out, x, y, &table.axes[0].name, &table.axes[1].name);
    let bx = W - RIGHT + 20.0;
    for k in 0..50 {
        let f = k as f64 / 49.0;
        let _ = writeln!(
            out,
            "<rect x=\"{bx}\" y=\"{:.2}\" width=\"18\" height=\"{:.2}\" fill=\"{}\"/>",
            TOP + ph - (k + 1) as f64 * ph / 50.0,
            ph / 50.0 + 0.05,
            color(f)
        );
    }
    for (f, v) in [(0.0, z.0), (1.0, z.1)] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{:.1}\">{}</text>",
            bx + 24.0,
            TOP + ph - f * ph + 4.0,
            tick(v)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes the requested formats next to `stem` (`stem.csv`, `stem.json`,
/// `stem.svg` or `stem_<column>.svg` for two axes). Returns the paths.
pub fn emit(table: &ResultTable, stem: &Path, formats: &[Format]) -> Result<Vec<PathBuf>, EmitError> {
    let with_ext = |ext: &str| {
        let mut p = stem.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    let mut written = Vec::new();
    for f in formats {
        match f {
            Format::Csv => {
                let p = with_ext(".csv");
                write_atomic(&p, to_csv(table).as_bytes())?;
                written.push(p);
            }
            Format::Json => {
                let p = with_ext(".json");
                write_atomic(&p, to_json(table).as_bytes())?;
                written.push(p);
            }
            Format::Svg if table.columns.is_empty() => {}
            Format::Svg if table.axes.len() == 1 => {
                let p = with_ext(".svg");
                write_atomic(&p, line_svg(table).as_bytes())?;
                written.push(p);
            }
            Format::Svg => {
                for (k, name) in table.columns.iter().enumerate() {
                    let p = with_ext(&format!("_{name}.svg"));
                    write_atomic(&p, heatmap_svg(table, k).as_bytes())?;
                    written.push(p);
                }
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Preset;
    use crate::scan::{run_scan, Axis, Method, Observable, ScanSpec};

    fn table(axes: Vec<Axis>, obs: Vec<Observable>) -> ResultTable {
        let mut s = ScanSpec::new(Method::Ae, Preset::BadCavity.params(), axes);
        s.observables = obs;
        s.workers = 1;
        run_scan(&s).unwrap()
    }

    #[test]
    fn csv_layout() {
        let t = table(vec![Axis::new("Delta_1", -1.0, 1.0, 1.0)], vec![Observable::FluxA1, Observable::P3]);
        let csv = to_csv(&t);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# wgmsim "));
        assert_eq!(lines[1], "Delta_1,F_a1,P3,residual,status");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("-1,"));
        assert!(lines[2].ends_with(",ok"));
    }

    #[test]
    fn csv_is_deterministic_apart_from_metadata() {
        let a = table(vec![Axis::new("Delta_1", -25.0, -15.0, 2.5)], Observable::ALL.to_vec());
        let b = table(vec![Axis::new("Delta_1", -25.0, -15.0, 2.5)], Observable::ALL.to_vec());
        let strip = |s: String| s.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(to_csv(&a)), strip(to_csv(&b)));
    }

    #[test]
    fn empty_selection_gives_axes_only() {
        let t = table(vec![Axis::new("Delta_1", 0.0, 1.0, 1.0)], vec![]);
        let csv = to_csv(&t);
        assert_eq!(csv.lines().nth(1).unwrap(), "Delta_1,residual,status");
        let dir = tempfile::tempdir().unwrap();
        let written = emit(&t, &dir.path().join("x"), &[Format::Csv, Format::Svg]).unwrap();
        assert_eq!(written.len(), 1);
    }

    #[test]
    fn json_is_versioned_and_nulls_non_finite() {
        let mut t = table(vec![Axis::new("Delta_1", 0.0, 1.0, 1.0)], vec![Observable::P3]);
        t.rows[0].values[0] = f64::NAN;
        let v: serde_json::Value = serde_json::from_str(&to_json(&t)).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert!(v["rows"][0]["values"][0].is_null());
        assert_eq!(v["columns"][0], "P3");
    }

    #[test]
    fn writes_files_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let one = table(vec![Axis::new("Delta_1", -2.0, 2.0, 1.0)], vec![Observable::FluxA1]);
        let paths = emit(&one, &dir.path().join("line"), &[Format::Csv, Format::Json, Format::Svg]).unwrap();
        assert_eq!(paths.len(), 3);
        let svg = std::fs::read_to_string(dir.path().join("line.svg")).unwrap();
        assert!(svg.contains("<polyline"));
        let two = table(
            vec![Axis::new("Delta_1", -2.0, 2.0, 1.0), Axis::new("Delta_2", 0.0, 1.0, 1.0)],
            vec![Observable::P3, Observable::FluxA1],
        );
        let paths = emit(&two, &dir.path().join("map"), &[Format::Svg]).unwrap();
        assert_eq!(paths.len(), 2);
        let svg = std::fs::read_to_string(dir.path().join("map_P3.svg")).unwrap();
        assert_eq!(svg.matches("<rect").count(), 1 + 1 + 10 + 50);
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 5);
    }

    #[test]
    fn unwritable_path_is_reported() {
        let t = table(vec![Axis::new("Delta_1", 0.0, 0.0, 1.0)], vec![]);
        let err = emit(&t, Path::new("/nonexistent-dir/x"), &[Format::Csv]).unwrap_err();
        assert!(matches!(err, EmitError::IoFailure { .. }));
    }
}
