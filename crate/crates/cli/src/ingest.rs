//! CSV ingestion for tabular studies and CSV output of datasets.

use std::io::Write;
use std::path::Path;

use interpfn_core::data::Dataset;
use serde::Serialize;

use crate::config::{TabularSection, TargetTransform};
use crate::error::CliError;

/// What ingestion did to the raw file, kept in the report so that outputs can
/// be mapped back to original units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub rows_used: usize,
    pub target: String,
    pub target_transform: TargetTransform,
    pub features: Vec<String>,
    /// Column means and sample SDs (divisor `n - 1`) used for standardization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Vec<ColumnScale>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnScale {
    pub column: String,
    pub mean: f64,
    pub sd: f64,
}

const MISSING: [&str; 5] = ["", "na", "nan", ".", "null"];

fn is_missing(cell: &str) -> bool {
    let c = cell.trim().to_ascii_lowercase();
    MISSING.contains(&c.as_str())
}

pub fn ingest_csv(spec: &TabularSection) -> Result<(Dataset, IngestSummary), CliError> {
    let file = std::fs::File::open(&spec.csv)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", spec.csv.display())))?;
    ingest_reader(file, spec)
}

pub fn ingest_reader<R: std::io::Read>(
    reader: R,
    spec: &TabularSection,
) -> Result<(Dataset, IngestSummary), CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("column {name:?} not in CSV header {header:?}")))
    };
    let target_col = col(&spec.target)?;
    let features: Vec<String> = if spec.features.is_empty() {
        header.iter().filter(|h| **h != spec.target).cloned().collect()
    } else {
        spec.features.clone()
    };
    let feature_cols = features.iter().map(|f| col(f)).collect::<Result<Vec<_>, _>>()?;
    if feature_cols.is_empty() {
        return Err(CliError::Config("no feature columns selected".into()));
    }

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut rows_read = 0;
    let mut dropped = 0;
    let mut bad: Vec<String> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("malformed CSV: {e}")))?;
        rows_read += 1;
        // header is line 1
        let line = rec.position().map_or(rows_read + 1, |p| p.line() as usize);
        let wanted = std::iter::once(target_col).chain(feature_cols.iter().copied());
        let cells: Vec<&str> = wanted.map(|c| rec.get(c).unwrap_or("")).collect();
        if cells.iter().any(|c| is_missing(c)) {
            dropped += 1;
            continue;
        }
        let mut vals = Vec::with_capacity(cells.len());
        for (cell, name) in cells.iter().zip(std::iter::once(&spec.target).chain(&features)) {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => vals.push(v),
                _ => bad.push(format!("line {line}: column {name}: {cell:?} is not a number")),
            }
        }
        if vals.len() != cells.len() {
            continue;
        }
        let y = spec.target_transform.apply(vals[0]);
        if !y.is_finite() {
            bad.push(format!("line {line}: target {} has no finite transformed value", vals[0]));
            continue;
        }
        rows.push((vals[1..].to_vec(), y));
    }
    if !bad.is_empty() {
        let shown: Vec<&str> = bad.iter().take(10).map(String::as_str).collect();
        let more = if bad.len() > 10 { format!(" (and {} more)", bad.len() - 10) } else { String::new() };
        return Err(CliError::Data(format!("{}{more}", shown.join("; "))));
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("no complete rows among {rows_read}")));
    }

    let standardization = if spec.standardize {
        Some(standardize(&mut rows, &features)?)
    } else {
        None
    };
    let mut ds = Dataset::new(features.clone(), vec![spec.target.clone()]);
    for (x, y) in &rows {
        ds.push(x, &[*y]).map_err(|e| CliError::Data(e.to_string()))?;
    }
    let summary = IngestSummary {
        rows_read,
        rows_dropped: dropped,
        rows_used: rows.len(),
        target: spec.target.clone(),
        target_transform: spec.target_transform,
        features,
        standardization,
    };
    Ok((ds, summary))
}

fn standardize(rows: &mut [(Vec<f64>, f64)], names: &[String]) -> Result<Vec<ColumnScale>, CliError> {
    if rows.len() < 2 {
        return Err(CliError::Data("standardization needs at least two rows".into()));
    }
    let n = rows.len() as f64;
    let mut out = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let mean = rows.iter().map(|r| r.0[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.0[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(CliError::Data(format!("column {name} is constant and cannot be standardized")));
        }
        for r in rows.iter_mut() {
            r.0[j] = (r.0[j] - mean) / sd;
        }
        out.push(ColumnScale { column: name.clone(), mean, sd });
    }
    Ok(out)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_dataset<W: Write>(ds: &Dataset, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ds.feature_names.iter().chain(&ds.target_names))?;
    for i in 0..ds.len() {
        w.write_record(ds.x(i).iter().chain(ds.y(i)).map(|v| fmt_num(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(ds: &Dataset, path: &Path) -> Result<(), CliError> {
    let f = std::fs::File::create(path)
        .map_err(|source| CliError::Output { path: path.display().to_string(), source })?;
    write_dataset(ds, std::io::BufWriter::new(f))
        .map_err(|e| CliError::Output { path: path.display().to_string(), source: e.into() })
}

/// Reads a file written by [`write_dataset`]; the last `n_targets` columns are
/// targets.
pub fn read_dataset<R: std::io::Read>(reader: R, n_targets: usize) -> Result<Dataset, CliError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() <= n_targets {
        return Err(CliError::Data(format!("expected more than {n_targets} columns")));
    }
    let split = header.len() - n_targets;
    let mut ds = Dataset::new(header[..split].to_vec(), header[split..].to_vec());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(e.to_string()))?;
        let vals = rec
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| CliError::Data(format!("line {}: {c:?} is not a number", i + 2))))
            .collect::<Result<Vec<f64>, _>>()?;
        ds.push(&vals[..split.min(vals.len())], &vals[split.min(vals.len())..])
            .map_err(|e| CliError::Data(format!("line {}: {e}", i + 2)))?;
    }
    Ok(ds)
}
