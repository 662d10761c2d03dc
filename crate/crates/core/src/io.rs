//! CSV and JSON export with lossless round trips.
//!
//! Floats are written in Rust's shortest round-trip decimal form, so a
//! value read back is bitwise equal to the value written.
//!
//! Schemas:
//! - measures: `x,y,mass`
//! - path measures: `path,mass` with the path as `;`-separated cell indices
//! - profiles: `s,intensity`
//! - hits: `run_id,x,y,channel_mask`

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::analysis::RadialProfile;
use crate::discretization::{DiscretePath, PathGrid, PathMeasure};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::measure::{SpatialGrid, SpatialMeasure};
use crate::montecarlo::HitRow;

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path)?)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MassRow {
    x: f64,
    y: f64,
    mass: f64,
}

/// One row per grid cell.
pub fn write_measure_csv(nu: &SpatialMeasure, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "y", "mass"]).map_err(csv_err)?;
    for (c, m) in nu.grid().centers().iter().zip(nu.mass()) {
        w.serialize(MassRow { x: c.x, y: c.y, mass: *m }).map_err(csv_err)?;
    }
    finish(w)
}

pub fn read_measure_rows(path: &Path) -> Result<Vec<(Point, f64)>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    r.deserialize::<MassRow>()
        .map(|row| row.map(|m| (Point::new(m.x, m.y), m.mass)).map_err(csv_err))
        .collect()
}

/// Read a measure back onto `grid`; rows must list the grid centers in order.
pub fn read_measure_csv(grid: Arc<SpatialGrid>, path: &Path) -> Result<SpatialMeasure> {
    let rows = read_measure_rows(path)?;
    if rows.len() != grid.len() || rows.iter().zip(grid.centers()).any(|((p, _), c)| p != c) {
        return Err(Error::GridMismatch(format!("{} does not list the grid cells in order", path.display())));
    }
    SpatialMeasure::new(grid, rows.into_iter().map(|r| r.1).collect())
}

#[derive(Serialize, Deserialize)]
struct PathRow {
    path: String,
    mass: f64,
}

pub fn write_path_measure_csv(nu: &PathMeasure, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["path", "mass"]).map_err(csv_err)?;
    for (u, m) in nu.iter() {
        let cells: Vec<String> = u.0.iter().map(|c| c.to_string()).collect();
        w.serialize(PathRow { path: cells.join(";"), mass: m }).map_err(csv_err)?;
    }
    finish(w)
}

pub fn read_path_measure_csv(grid: Arc<PathGrid>, path: &Path) -> Result<PathMeasure> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut out = PathMeasure::new(grid);
    for row in r.deserialize::<PathRow>() {
        let row = row.map_err(csv_err)?;
        let cells = row
            .path
            .split(';')
            .map(|c| c.parse::<u32>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<Vec<u32>>>()?;
        out.add(DiscretePath(cells), row.mass)?;
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ProfileRow {
    s: f64,
    intensity: f64,
}

pub fn write_profile_csv(rows: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["s", "intensity"]).map_err(csv_err)?;
    for &(s, intensity) in rows {
        w.serialize(ProfileRow { s, intensity }).map_err(csv_err)?;
    }
    finish(w)
}

pub fn write_radial_profile_csv(p: &RadialProfile, path: &Path) -> Result<()> {
    let rows: Vec<(f64, f64)> = p.radii.iter().copied().zip(p.intensity.iter().copied()).collect();
    write_profile_csv(&rows, path)
}

pub fn read_profile_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    r.deserialize::<ProfileRow>()
        .map(|row| row.map(|p| (p.s, p.intensity)).map_err(csv_err))
        .collect()
}

pub fn write_hits_csv(rows: &[HitRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["run_id", "x", "y", "channel_mask"]).map_err(csv_err)?;
    for h in rows {
        w.serialize(h).map_err(csv_err)?;
    }
    finish(w)
}

pub fn read_hits_csv(path: &Path) -> Result<Vec<HitRow>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    r.deserialize::<HitRow>().map(|row| row.map_err(csv_err)).collect()
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
