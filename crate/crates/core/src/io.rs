//! `.fld` snapshots: three text header lines (dim, points per axis, extents)
//! followed by row-major little-endian f64 values.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};

pub fn write_field(w: &mut impl Write, f: &ScalarField) -> Result<()> {
    let g = f.grid();
    let join = |items: Vec<String>| items.join(" ");
    writeln!(w, "{}", g.dim())?;
    writeln!(w, "{}", join(g.points().iter().map(|n| n.to_string()).collect()))?;
    writeln!(w, "{}", join(g.extent().iter().map(|e| e.to_string()).collect()))?;
    let mut buf = Vec::with_capacity(8 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn header_line(r: &mut impl BufRead, what: &str) -> Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::Format(format!("missing {what} line")));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

fn parse_list<T: std::str::FromStr>(line: &str, what: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::Format(format!("bad {what} entry {s:?}"))))
        .collect()
}

pub fn read_field(r: &mut impl BufRead) -> Result<ScalarField> {
    let dim: usize = header_line(r, "dim")?
        .trim()
        .parse()
        .map_err(|_| Error::Format("bad dim line".into()))?;
    let points: Vec<usize> = parse_list(&header_line(r, "points")?, "points")?;
    let extent: Vec<f64> = parse_list(&header_line(r, "extent")?, "extent")?;
    if points.len() != dim || extent.len() != dim {
        return Err(Error::Format(format!(
            "header declares dim {dim} but lists {} points and {} extents",
            points.len(),
            extent.len()
        )));
    }
    let grid = Grid::new(&points, &extent)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * grid.len() {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            8 * grid.len(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ScalarField::from_values(&grid, values)
}

pub fn save_field(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    let mut buf = Vec::new();
    write_field(&mut buf, f)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let bytes = fs::read(path)?;
    read_field(&mut bytes.as_slice())
}
