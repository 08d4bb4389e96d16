//! File formats: CSV series in, triplet adjacency and headered tables out.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value read back parses to the identical bit pattern. All writers go through
//! a temporary file in the destination directory followed by a rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CgpError, Result};
use crate::eval::{BenchmarkReport, RecoveryReport, TimingProfile};
use crate::model::{AdjacencyMatrix, PolyCoefficients, TimeSeries};
use crate::rolling::RollingRow;
use crate::select::SelectionCurve;

pub const TRIPLET_HEADER: [&str; 3] = ["row", "col", "weight"];

/// Price-to-series transform applied on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// `ln(p(k) / p(k−1))`, one sample shorter than the input.
    LogReturn,
}

/// A series together with its node labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub labels: Vec<String>,
    pub series: TimeSeries,
}

fn csv_err(row: usize, col: usize, message: impl Into<String>) -> CgpError {
    CgpError::Csv {
        row,
        col,
        message: message.into(),
    }
}

/// Parses a row-per-time-step CSV whose first row holds node labels.
///
/// Error coordinates are 1-based file line and column numbers.
pub fn parse_csv(text: &str, transform: Transform) -> Result<LabeledSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_err(1, 1, e.to_string()))?,
        None => return Err(csv_err(1, 1, "empty file")),
    };
    let labels: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let n = labels.len();
    if n == 0 || labels.iter().all(|l| l.is_empty()) {
        return Err(csv_err(1, 1, "missing header row"));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| csv_err(line, 1, e.to_string()))?;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() != n {
            return Err(csv_err(line, rec.len().min(n) + 1, format!("expected {n} cells, found {}", rec.len())));
        }
        let mut row = Vec::with_capacity(n);
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| csv_err(line, c + 1, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(csv_err(line, c + 1, "non-finite value"));
            }
            row.push(v);
        }
        rows.push(row);
    }
    let values = match transform {
        Transform::None => Array2::from_shape_fn((n, rows.len()), |(i, k)| rows[k][i]),
        Transform::LogReturn => {
            for (k, row) in rows.iter().enumerate() {
                if let Some(c) = row.iter().position(|p| *p <= 0.0) {
                    return Err(csv_err(k + 2, c + 1, "price must be positive for log returns"));
                }
            }
            let len = rows.len().saturating_sub(1);
            Array2::from_shape_fn((n, len), |(i, k)| (rows[k + 1][i] / rows[k][i]).ln())
        }
    };
    Ok(LabeledSeries {
        labels,
        series: TimeSeries::new(values)?,
    })
}

pub fn load_csv(path: &Path, transform: Transform) -> Result<LabeledSeries> {
    let text = fs::read_to_string(path).map_err(|e| CgpError::io(path, e))?;
    parse_csv(&text, transform)
}

/// Default labels `x0, x1, ...`.
pub fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

fn table<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let run = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
        w.write_record(header)?;
        fill(w)?;
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(|e| csv_err(0, 0, e.to_string()))?;
    w.into_inner().map_err(|e| csv_err(0, 0, e.to_string()))
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CgpError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| CgpError::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(CgpError::io(&tmp, e));
    }
    fs::rename(&tmp, path).map_err(|e| CgpError::io(path, e))
}

pub fn series_csv(series: &TimeSeries, labels: &[String]) -> Result<Vec<u8>> {
    if labels.len() != series.n_nodes() {
        return Err(CgpError::DimensionMismatch {
            context: "series labels",
            expected: format!("{} labels", series.n_nodes()),
            found: format!("{} labels", labels.len()),
        });
    }
    let header: Vec<&str> = labels.iter().map(String::as_str).collect();
    let values = series.values();
    table(&header, |w| {
        for k in 0..series.n_samples() {
            w.write_record(values.column(k).iter().map(|v| v.to_string()))?;
        }
        Ok(())
    })
}

pub fn write_series(path: &Path, series: &TimeSeries, labels: &[String]) -> Result<()> {
    write_atomic(path, &series_csv(series, labels)?)
}

/// Path of the JSON sidecar next to a data file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CgpError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CgpError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CgpError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn adjacency_csv(a: &AdjacencyMatrix) -> Result<Vec<u8>> {
    table(&TRIPLET_HEADER, |w| {
        for (i, j, v) in a.triplets() {
            w.write_record([i.to_string(), j.to_string(), v.to_string()])?;
        }
        Ok(())
    })
}

/// Writes `A` as `row,col,weight` triplets plus a JSON sidecar holding `meta`
/// merged with the matrix dimensions.
pub fn write_adjacency(path: &Path, a: &AdjacencyMatrix, meta: &Map<String, Value>) -> Result<()> {
    let mut side = meta.clone();
    side.insert("n_nodes".into(), a.n_nodes().into());
    side.insert("edge_count".into(), a.edge_count().into());
    side.insert("layout".into(), "triplet csv: row,col,weight (0-based; row i receives from col j)".into());
    write_atomic(path, &adjacency_csv(a)?)?;
    write_json(&sidecar_path(path), &Value::Object(side))
}

pub fn parse_adjacency(text: &str, n_nodes: usize) -> Result<AdjacencyMatrix> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_err(1, 1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != TRIPLET_HEADER {
        return Err(csv_err(1, 1, "expected header row,col,weight"));
    }
    let mut w = Array2::zeros((n_nodes, n_nodes));
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| csv_err(line, 1, e.to_string()))?;
        let index = |c: usize| -> Result<usize> {
            let v: usize = rec[c]
                .trim()
                .parse()
                .map_err(|_| csv_err(line, c + 1, format!("not an index: {:?}", &rec[c])))?;
            if v >= n_nodes {
                return Err(csv_err(line, c + 1, format!("index {v} outside 0..{n_nodes}")));
            }
            Ok(v)
        };
        let (i, j) = (index(0)?, index(1)?);
        let v: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| csv_err(line, 3, format!("not a number: {:?}", &rec[2])))?;
        w[[i, j]] = v;
    }
    AdjacencyMatrix::new(w)
}

/// Reads a triplet file, taking the dimension from its sidecar.
pub fn read_adjacency(path: &Path) -> Result<AdjacencyMatrix> {
    let side: Value = read_json(&sidecar_path(path))?;
    let n = side
        .get("n_nodes")
        .and_then(Value::as_u64)
        .ok_or_else(|| CgpError::InvalidParameter(format!("{} lacks n_nodes", sidecar_path(path).display())))?;
    let text = fs::read_to_string(path).map_err(|e| CgpError::io(path, e))?;
    parse_adjacency(&text, n as usize)
}

pub fn poly_csv(c: &PolyCoefficients) -> Result<Vec<u8>> {
    table(&["lag", "power", "value"], |w| {
        for l in 1..=c.n_lags() {
            for (j, v) in c.lag(l).iter().enumerate() {
                w.write_record([l.to_string(), j.to_string(), v.to_string()])?;
            }
        }
        Ok(())
    })
}

pub const CURVE_HEADER: [&str; 11] = [
    "lambda1",
    "edge_count",
    "err",
    "err_d",
    "aic",
    "bic",
    "mse_in",
    "mse_out",
    "n_sweeps",
    "stop_reason",
    "failure",
];

/// One row per grid value; undefined metrics are empty cells.
pub fn curve_csv(curve: &SelectionCurve) -> Result<Vec<u8>> {
    table(&CURVE_HEADER, |w| {
        for r in &curve.rows {
            w.write_record([
                r.lambda1.to_string(),
                r.edge_count.map(|e| e.to_string()).unwrap_or_default(),
                cell(r.err),
                cell(r.err_d),
                cell(r.aic),
                cell(r.bic),
                cell(r.mse_in),
                cell(r.mse_out),
                r.fit.as_ref().map(|f| f.n_sweeps.to_string()).unwrap_or_default(),
                r.fit.as_ref().map(|f| f.stop_reason.as_str().to_string()).unwrap_or_default(),
                r.failure.clone().unwrap_or_default(),
            ])?;
        }
        Ok(())
    })
}

const REPORT_HEADER: [&str; 9] = [
    "nbde",
    "nbde_pct",
    "true_positive_pct",
    "false_positive_pct",
    "adjacency_mse",
    "true_edges",
    "estimated_edges",
    "true_positive_count",
    "false_positive_count",
];

fn report_cells(r: &RecoveryReport) -> [String; 9] {
    [
        r.nbde.to_string(),
        r.nbde_pct.to_string(),
        r.true_positive_pct.to_string(),
        r.false_positive_pct.to_string(),
        r.adjacency_mse.to_string(),
        r.true_edges.to_string(),
        r.estimated_edges.to_string(),
        r.true_positive_count.to_string(),
        r.false_positive_count.to_string(),
    ]
}

pub fn report_csv(r: &RecoveryReport) -> Result<Vec<u8>> {
    table(&REPORT_HEADER, |w| w.write_record(report_cells(r)))
}

/// Per-seed rows; failed seeds keep their seed and error message.
pub fn benchmark_seeds_csv(report: &BenchmarkReport) -> Result<Vec<u8>> {
    let mut header = vec!["seed", "true_density", "lambda1"];
    header.extend(REPORT_HEADER);
    header.push("error");
    table(&header, |w| {
        for s in &report.per_seed {
            let mut row = vec![s.seed.to_string(), cell(s.true_density), cell(s.lambda1)];
            match &s.report {
                Some(r) => row.extend(report_cells(r)),
                None => row.extend(std::iter::repeat_n(String::new(), REPORT_HEADER.len())),
            }
            row.push(s.error.clone().unwrap_or_default());
            w.write_record(row)?;
        }
        Ok(())
    })
}

/// `metric, median, iqr` for each recovery metric over successful seeds.
pub fn benchmark_summary_csv(report: &BenchmarkReport) -> Result<Vec<u8>> {
    let s = &report.summary;
    table(&["metric", "median", "iqr"], |w| {
        for (name, v) in [
            ("nbde", s.nbde),
            ("nbde_pct", s.nbde_pct),
            ("true_positive_pct", s.true_positive_pct),
            ("false_positive_pct", s.false_positive_pct),
            ("adjacency_mse", s.adjacency_mse),
        ] {
            w.write_record([name.to_string(), v.median.to_string(), v.iqr.to_string()])?;
        }
        Ok(())
    })
}

pub fn rolling_csv(rows: &[RollingRow]) -> Result<Vec<u8>> {
    table(
        &["window_start", "window_end", "sparsity_pct", "lambda1", "market_log_rv", "error"],
        |w| {
            for r in rows {
                w.write_record([
                    r.window_start.to_string(),
                    r.window_end.to_string(),
                    cell(r.sparsity_pct),
                    cell(r.lambda1),
                    cell(r.market_log_rv),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
            Ok(())
        },
    )
}

pub fn timing_csv(profile: &TimingProfile) -> Result<Vec<u8>> {
    table(&["axis", "n_nodes", "n_samples", "seconds", "n_sweeps"], |w| {
        let axis = format!("{:?}", profile.axis).to_lowercase();
        for r in &profile.rows {
            w.write_record([
                axis.clone(),
                r.n_nodes.to_string(),
                r.n_samples.to_string(),
                r.seconds.to_string(),
                r.n_sweeps.to_string(),
            ])?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn three_by_five() {
        let text = "a,b,c\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n";
        let s = parse_csv(text, Transform::None).unwrap();
        assert_eq!(s.labels, ["a", "b", "c"]);
        assert_eq!(s.series.n_nodes(), 3);
        assert_eq!(s.series.n_samples(), 5);
        assert_eq!(s.series.values()[[1, 3]], 11.0);
    }

    #[test]
    fn constant_price_gives_zero_returns() {
        let s = parse_csv("p,q\n5,1\n5,2\n5,4\n", Transform::LogReturn).unwrap();
        assert_eq!(s.series.n_samples(), 2);
        assert!(s.series.values().row(0).iter().all(|v| *v == 0.0));
        assert!((s.series.values()[[1, 1]] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn known_returns_are_recovered() {
        let returns = [0.01, -0.02, 0.003, 0.5, -0.25];
        let mut p = 100.0;
        let mut text = String::from("s\n100\n");
        let mut prices = vec![p];
        for r in returns {
            p *= f64::exp(r);
            prices.push(p);
            text.push_str(&format!("{p}\n"));
        }
        let s = parse_csv(&text, Transform::LogReturn).unwrap();
        for (k, r) in returns.iter().enumerate() {
            assert!((s.series.values()[[0, k]] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn malformed_cells_carry_coordinates() {
        match parse_csv("a,b\n1,2\n3\n", Transform::None) {
            Err(CgpError::Csv { row: 3, .. }) => {}
            other => panic!("ragged row: {other:?}"),
        }
        match parse_csv("a,b\n1,2\n3,x\n", Transform::None) {
            Err(CgpError::Csv { row: 3, col: 2, .. }) => {}
            other => panic!("non-numeric: {other:?}"),
        }
        match parse_csv("a,b\n1,2\n3,0\n", Transform::LogReturn) {
            Err(CgpError::Csv { row: 3, col: 2, .. }) => {}
            other => panic!("non-positive: {other:?}"),
        }
        assert!(parse_csv("", Transform::None).is_err());
    }

    #[test]
    fn empty_adjacency_writes_header_only() {
        let bytes = adjacency_csv(&AdjacencyMatrix::zeros(4)).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "row,col,weight\n");
    }

    #[test]
    fn adjacency_text_round_trip() {
        let a = AdjacencyMatrix::new(array![[0.0, 0.1 + 0.2], [-1e-300, 0.0]]).unwrap();
        let text = String::from_utf8(adjacency_csv(&a).unwrap()).unwrap();
        let back = parse_adjacency(&text, 2).unwrap();
        for (x, y) in a.weights().iter().zip(back.weights()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(parse_adjacency("row,col,weight\n2,0,1\n", 2).is_err());
    }

    #[test]
    fn series_round_trip_is_exact() {
        let x = TimeSeries::new(array![[1.0 / 3.0, -2.5e-17], [std::f64::consts::PI, 7.0]]).unwrap();
        let labels = default_labels(2);
        let text = String::from_utf8(series_csv(&x, &labels).unwrap()).unwrap();
        let back = parse_csv(&text, Transform::None).unwrap();
        assert_eq!(back.labels, labels);
        assert_eq!(back.series, x);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
