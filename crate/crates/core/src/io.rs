//! Field and trace serialization.
//!
//! Binary fields: `u64` LE dimension, `u64` LE resolution per axis, then the
//! node values as `f64` LE in grid order (axis 0 fastest).

use std::io::{Read, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::band::BandRecord;
use crate::error::{Error, Result};
use crate::flow::FlowTrace;
use crate::hm::SharpnessPoint;
use crate::lattice::Grid;
use crate::spectral::ScalarField;

pub fn write_field_binary<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    let grid = field.grid();
    out.write_all(&(grid.dim() as u64).to_le_bytes())?;
    for &r in grid.resolution() {
        out.write_all(&(r as u64).to_le_bytes())?;
    }
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Reads a binary field written for a grid of the same shape as `grid`.
pub fn read_field_binary<R: Read>(grid: &Arc<Grid>, mut input: R) -> Result<ScalarField> {
    let dim = read_u64(&mut input)? as usize;
    if dim != grid.dim() {
        return Err(Error::Parse(format!(
            "field has dimension {dim}, grid has {}",
            grid.dim()
        )));
    }
    for (axis, &expect) in grid.resolution().iter().enumerate() {
        let r = read_u64(&mut input)? as usize;
        if r != expect {
            return Err(Error::Parse(format!(
                "axis {axis} has resolution {r} in the file, {expect} on the grid"
            )));
        }
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut buf = [0u8; 8];
    for _ in 0..grid.len() {
        input.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes after field data", rest.len())));
    }
    ScalarField::new(grid, values)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// CSV with columns `node, x0, .., x{d-1}, value`.
pub fn write_field_csv<W: Write>(field: &ScalarField, out: W) -> Result<()> {
    let grid = field.grid();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["node".to_string()];
    header.extend((0..grid.dim()).map(|a| format!("x{a}")));
    header.push("value".into());
    w.write_record(&header).map_err(csv_error)?;
    for (node, v) in field.values().iter().enumerate() {
        let mut row = vec![node.to_string()];
        row.extend(grid.coords(node).iter().map(|c| c.to_string()));
        row.push(v.to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `value` column of a field CSV onto `grid`.
pub fn read_field_csv<R: Read>(grid: &Arc<Grid>, input: R) -> Result<ScalarField> {
    let mut r = csv::Reader::from_reader(input);
    let col = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .position(|h| h.trim() == "value")
        .ok_or_else(|| Error::Parse("field csv has no value column".into()))?;
    let mut values = Vec::with_capacity(grid.len());
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let cell = record
            .get(col)
            .ok_or_else(|| Error::Parse(format!("row {} is missing the value column", i + 1)))?;
        values.push(
            cell.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?,
        );
    }
    ScalarField::new(grid, values)
}

fn write_serialized<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FlowRow {
    rho: f64,
    min_u: f64,
    max_u: f64,
    #[serde(rename = "F")]
    mass: f64,
    dissipation: f64,
    psi_max_delta: f64,
}

/// `rho, min_u, max_u, F, dissipation, psi_max_delta` per accepted step.
pub fn write_flow_trace_csv<W: Write>(trace: &FlowTrace, out: W) -> Result<()> {
    write_serialized(
        out,
        trace.steps.iter().map(|s| FlowRow {
            rho: s.rho,
            min_u: s.min_u,
            max_u: s.max_u,
            mass: s.mass,
            dissipation: s.dissipation,
            psi_max_delta: s.psi_max_delta,
        }),
    )
}

#[derive(Serialize)]
struct BandRow {
    t: f64,
    min_v: f64,
    max_v: f64,
    w_minus: f64,
    w_plus: f64,
    total_mean_curvature: f64,
    #[serde(rename = "fd_R_max_dev")]
    fd_r_max_dev: Option<f64>,
}

/// Band trace rows; `fd_deviation` holds `max |R + K|` per row where computed.
pub fn write_band_trace_csv<W: Write>(
    records: &[BandRecord],
    fd_deviation: &[Option<f64>],
    out: W,
) -> Result<()> {
    write_serialized(
        out,
        records.iter().enumerate().map(|(i, r)| BandRow {
            t: r.t,
            min_v: r.min_v,
            max_v: r.max_v,
            w_minus: r.w_minus,
            w_plus: r.w_plus,
            total_mean_curvature: r.total_mean_curvature,
            fd_r_max_dev: fd_deviation.get(i).copied().flatten(),
        }),
    )
}

/// `R, H, sigma, lhs, rhs, ratio` per boundary radius.
pub fn write_sharpness_csv<W: Write>(points: &[SharpnessPoint], out: W) -> Result<()> {
    write_serialized(out, points)
}
