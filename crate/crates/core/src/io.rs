//! Reading and writing fields, reports and curves.
//!
//! Grid dumps are raw little-endian `f64` in node order (first axis fastest,
//! `NaN` on masked nodes) next to a JSON header. CSV tables print 17
//! significant digits.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::GridDomain;
use crate::spacetime::NullGeodesic;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub name: String,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub dim: usize,
    pub shape: Vec<usize>,
    pub origin: Vec<f64>,
    pub h: f64,
    pub data_file: String,
}

/// Writes `<stem>.f64` and `<stem>.json`; returns both paths.
pub fn write_grid(dir: &Path, stem: &str, field: &ScalarField) -> Result<[std::path::PathBuf; 2]> {
    let d = field.domain();
    let data_file = format!("{stem}.f64");
    let header = GridHeader {
        name: stem.to_string(),
        dtype: "float64".into(),
        byte_order: "little".into(),
        layout: "first axis fastest".into(),
        dim: d.dim(),
        shape: d.shape().to_vec(),
        origin: d.origin().to_vec(),
        h: d.h(),
        data_file: data_file.clone(),
    };
    let bytes: Vec<u8> = field.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let data_path = dir.join(&data_file);
    fs::write(&data_path, bytes)?;
    let header_path = dir.join(format!("{stem}.json"));
    write_json(&header_path, &header)?;
    Ok([data_path, header_path])
}

/// Reads a grid dump; masked nodes are restored from the `NaN` entries.
pub fn read_grid(header_path: &Path) -> Result<ScalarField> {
    let header: GridHeader = serde_json::from_slice(&fs::read(header_path)?)?;
    if header.dtype != "float64" || header.byte_order != "little" {
        return Err(Error::Data(format!(
            "unsupported grid encoding {} / {}",
            header.dtype, header.byte_order
        )));
    }
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let raw = fs::read(dir.join(&header.data_file))?;
    if raw.len() % 8 != 0 {
        return Err(Error::Data("grid data is not a whole number of f64 values".into()));
    }
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut domain = GridDomain::new(&header.origin, &header.shape, header.h)?;
    if values.len() != domain.len() {
        return Err(Error::Data(format!(
            "grid data has {} values, header describes {}",
            values.len(),
            domain.len()
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        domain = domain.with_mask(values.iter().map(|v| !v.is_nan()).collect())?;
    }
    ScalarField::new(Arc::new(domain), values)
}

/// Node table with coordinates and one column per field.
pub fn write_fields_csv(path: &Path, columns: &[(&str, &ScalarField)]) -> Result<()> {
    let Some((_, first)) = columns.first() else {
        return Err(Error::Argument("no columns".into()));
    };
    let d = first.domain();
    if columns.iter().any(|(_, f)| !f.same_domain(first)) {
        return Err(Error::Argument("fields live on different grids".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut head: Vec<String> = vec!["node".into()];
    head.extend((1..=d.dim()).map(|a| format!("x{a}")));
    head.extend(columns.iter().map(|(n, _)| n.to_string()));
    w.write_record(&head).map_err(csv_error)?;
    for i in d.active_nodes() {
        let x = d.coords(i);
        let mut row = vec![i.to_string()];
        row.extend(x[..d.dim()].iter().map(|&v| fmt_f64(v)));
        row.extend(columns.iter().map(|(_, f)| fmt_f64(f.get(i))));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `tau, t, x1..xn, null_defect`.
pub fn write_geodesic_csv(path: &Path, g: &NullGeodesic) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut head: Vec<String> = vec!["tau".into(), "t".into()];
    head.extend((1..=g.dim).map(|a| format!("x{a}")));
    head.push("null_defect".into());
    w.write_record(&head).map_err(csv_error)?;
    for ((tau, p), d) in g.tau.iter().zip(&g.points).zip(&g.null_defect) {
        let mut row = vec![fmt_f64(*tau)];
        row.extend(p.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(*d));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("csv: {other:?}")),
    }
}
