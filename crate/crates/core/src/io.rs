//! CSV and JSON persistence plus content hashes for reproducibility manifests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{check_len, Error, Result};
use crate::integrate::{Dataset, Trajectory};

/// Hex-encoded SHA-256 digest.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a matrix's shape and little-endian row-major entries.
pub fn hash_matrix(a: ArrayView2<f64>) -> String {
    let mut h = Sha256::new();
    h.update((a.nrows() as u64).to_le_bytes());
    h.update((a.ncols() as u64).to_le_bytes());
    for v in a.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(content_hash(&std::fs::read(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

/// Rows `t, u(x_0), …, u(x_N)`; the header lists the grid nodes.
pub fn write_field_csv(path: &Path, nodes: &[f64], times: &[f64], values: ArrayView2<f64>) -> Result<()> {
    check_len("field rows", times.len(), values.nrows())?;
    check_len("field columns", nodes.len(), values.ncols())?;
    let mut w = writer(path)?;
    let header: Vec<String> = std::iter::once("t".to_string()).chain(nodes.iter().map(|&x| fmt(x))).collect();
    w.write_record(&header).map_err(csv_err)?;
    for (t, row) in times.iter().zip(values.rows()) {
        let rec: Vec<String> = std::iter::once(fmt(*t)).chain(row.iter().map(|&v| fmt(v))).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `t, a_1, …, a_n`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    let n = traj.states.ncols();
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|k| format!("a{k}"))).collect();
    w.write_record(&header).map_err(csv_err)?;
    for (t, row) in traj.times.iter().zip(traj.states.rows()) {
        let rec: Vec<String> = std::iter::once(fmt(*t)).chain(row.iter().map(|&v| fmt(v))).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `trajectory_id, t, a_1, …, a_n`.
pub fn write_dataset_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = writer(path)?;
    let n = ds.snapshots.ncols();
    let header: Vec<String> = ["trajectory_id".to_string(), "t".to_string()]
        .into_iter()
        .chain((1..=n).map(|k| format!("a{k}")))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for ((id, t), row) in ds.trajectory_ids.iter().zip(&ds.times).zip(ds.snapshots.rows()) {
        let rec: Vec<String> = [id.to_string(), fmt(*t)]
            .into_iter()
            .chain(row.iter().map(|&v| fmt(v)))
            .collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("line {line}: cannot parse '{s}' as a number")))
}

/// Reads a file written by [`write_dataset_csv`]. Failed trajectories are not stored in CSV.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.len() < 3 || &headers[0] != "trajectory_id" || &headers[1] != "t" {
        return Err(Error::InvalidInput(format!(
            "{}: expected header 'trajectory_id,t,a1,…'",
            path.display()
        )));
    }
    let n = headers.len() - 2;
    let (mut ids, mut times, mut flat) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        check_len("dataset columns", n + 2, rec.len())?;
        ids.push(
            rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("line {}: bad trajectory id", i + 2)))?,
        );
        times.push(parse_f64(&rec[1], i + 2)?);
        for v in rec.iter().skip(2) {
            flat.push(parse_f64(v, i + 2)?);
        }
    }
    let snapshots = Array2::from_shape_vec((ids.len(), n), flat).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(Dataset {
        snapshots,
        trajectory_ids: ids,
        times,
        failed: Vec::new(),
    })
}

/// Plot-ready long format `config, ic_index, value`.
pub fn write_long_csv(path: &Path, rows: &[(String, usize, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["config", "ic_index", "value"]).map_err(csv_err)?;
    for (c, i, v) in rows {
        w.write_record([c.clone(), i.to_string(), fmt(*v)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Named numeric columns of equal length.
pub fn write_columns_csv(path: &Path, names: &[&str], columns: &[&[f64]]) -> Result<()> {
    check_len("column names", names.len(), columns.len())?;
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::InvalidInput("columns differ in length".into()));
    }
    let mut w = writer(path)?;
    w.write_record(names).map_err(csv_err)?;
    for i in 0..rows {
        w.write_record(columns.iter().map(|c| fmt(c[i]))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Matrix as headerless CSV rows.
pub fn write_matrix_csv(path: &Path, a: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    for row in a.rows() {
        w.write_record(row.iter().map(|&v| fmt(v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
