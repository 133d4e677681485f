//! CSV and JSON persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::evolve::Trajectory;
use crate::ode_models::{effective_energy, ChainState};
use crate::spectral::Grid;
use crate::wavemap::FieldState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct FieldRow {
    y: f64,
    u: f64,
    v: f64,
}

pub fn write_field_csv<W: Write>(state: &FieldState, grid: &Grid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for ((&y, &u), &v) in grid.nodes().iter().zip(&state.u).zip(&state.v) {
        w.serialize(FieldRow { y, u, v })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(y, u, v)` columns.
pub fn read_field_csv<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(input);
    let mut ys = Vec::new();
    let mut us = Vec::new();
    let mut vs = Vec::new();
    for row in r.deserialize() {
        let row: FieldRow = row?;
        ys.push(row.y);
        us.push(row.u);
        vs.push(row.v);
    }
    Ok((ys, us, vs))
}

/// One trajectory CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub s: f64,
    pub bondi: f64,
    pub b_plus: f64,
    pub c1_x: Option<f64>,
    pub t_inferred: Option<f64>,
}

impl From<&DiagnosticsRecord> for TrajectoryRow {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            s: r.s,
            bondi: r.bondi,
            b_plus: r.b_plus,
            c1_x: r.c1(),
            t_inferred: r.t_inferred(),
        }
    }
}

impl TrajectoryRow {
    /// Record with the CSV's columns; radiation rates and inner positions are
    /// not stored and come back as zero and empty.
    pub fn to_record(&self) -> DiagnosticsRecord {
        DiagnosticsRecord {
            s: self.s,
            bondi: self.bondi,
            b_plus: self.b_plus,
            b_minus: 0.0,
            b_plus_dot: 0.0,
            b_minus_dot: 0.0,
            positions: self.c1_x.into_iter().collect(),
        }
    }
}

pub fn write_trajectory_csv<W: Write>(records: &[DiagnosticsRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(TrajectoryRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes `t, r_1..r_J, rdot_1..rdot_J, E_eff`.
pub fn write_chain_csv<W: Write>(trajectory: &Trajectory<ChainState>, out: W) -> Result<()> {
    let j = trajectory
        .states
        .first()
        .map(ChainState::len)
        .ok_or_else(|| Error::InvalidArgument("empty chain trajectory".into()))?;
    write_chain_rows(&trajectory.states, j, out)
}

pub fn write_chain_rows<W: Write>(states: &[ChainState], j: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=j).map(|i| format!("r_{i}")));
    header.extend((1..=j).map(|i| format!("rdot_{i}")));
    header.push("E_eff".into());
    w.write_record(&header)?;
    for st in states {
        let mut row = vec![st.t];
        row.extend_from_slice(&st.r);
        row.extend_from_slice(&st.rdot);
        row.push(effective_energy(st)?);
        w.write_record(row.iter().map(|x| format_float(*x)))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same value.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(input: impl Read) -> Result<T> {
    Ok(serde_json::from_reader(input)?)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}
