//! Plain-text and image output.
//!
//! Density CSV: one line per grid row, top row (`j = n-1`) first, values in
//! increasing `x`, comma separated, LF terminated. Numbers use the shortest
//! representation that parses back to the same `f64`. PGM files are binary
//! P5 with the same row order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::GridSpec;
use crate::simulator::{ComparisonReport, Snapshot};

pub const COMPARISON_HEADER: &str =
    "step,time,mass_a,mass_b,door_density_a,door_density_b,linf_diff,l2_diff";

pub const METRICS_HEADER: &str = "step,time,total_mass,door_outflux_cum,max_density,pd_iterations,gap";

pub fn density_csv(rho: &ScalarField) -> String {
    let g = rho.grid();
    let mut out = String::with_capacity(g.num_cells() * 8);
    for j in (0..g.n()).rev() {
        for i in 0..g.m() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", rho.get(i, j)));
        }
        out.push('\n');
    }
    out
}

pub fn parse_density_csv(text: &str, grid: GridSpec, path: &Path) -> Result<ScalarField> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != grid.n() {
        return Err(Error::parse(path, 0, format!("expected {} rows, found {}", grid.n(), rows.len())));
    }
    let mut field = ScalarField::zeros(grid);
    for (r, line) in rows.iter().enumerate() {
        let j = grid.n() - 1 - r;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != grid.m() {
            return Err(Error::parse(path, r + 1, format!("expected {} values, found {}", grid.m(), cols.len())));
        }
        for (i, c) in cols.iter().enumerate() {
            let v: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, r + 1, format!("not a number: '{}'", c.trim())))?;
            field.set(i, j, v);
        }
    }
    Ok(field)
}

pub fn read_density_csv(path: &Path, grid: GridSpec) -> Result<ScalarField> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_density_csv(&text, grid, path)
}

pub fn write_density_csv(snapshot: &Snapshot, path: &Path) -> Result<()> {
    fs::write(path, density_csv(&snapshot.rho)).map_err(|e| Error::io(path, e))
}

pub fn metrics_csv(snapshots: &[Snapshot]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for s in snapshots {
        let m = &s.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.step, m.time, m.total_mass, m.door_outflux_cum, m.max_density, m.pd_iterations, m.gap
        ));
    }
    out
}

pub fn write_metrics_csv(snapshots: &[Snapshot], path: &Path) -> Result<()> {
    fs::write(path, metrics_csv(snapshots)).map_err(|e| Error::io(path, e))
}

pub fn comparison_csv(report: &ComparisonReport) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.step, r.time, r.mass_a, r.mass_b, r.door_density_a, r.door_density_b, r.linf_diff, r.l2_diff
        ));
    }
    out
}

pub fn write_comparison_csv(report: &ComparisonReport, path: &Path) -> Result<()> {
    fs::write(path, comparison_csv(report)).map_err(|e| Error::io(path, e))
}

/// Grey level of a density, `round(255 clamp(rho, 0, 1))`.
pub fn grey(rho: f64) -> u8 {
    (255.0 * rho.clamp(0.0, 1.0)).round() as u8
}

pub fn pgm(rho: &ScalarField) -> Vec<u8> {
    let g = rho.grid();
    let mut out = format!("P5\n{} {}\n255\n", g.m(), g.n()).into_bytes();
    for j in (0..g.n()).rev() {
        for i in 0..g.m() {
            out.push(grey(rho.get(i, j)));
        }
    }
    out
}

/// Split a P5 image into `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Option<(usize, usize, &[u8])> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let pixels = bytes.get(pos..)?;
    (pixels.len() == w * h).then_some((w, h, pixels))
}

pub fn write_pgm(snapshot: &Snapshot, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&pgm(&snapshot.rho)).map_err(|e| Error::io(path, e))
}

/// `density_000025.csv` and `density_000025.pgm` for every snapshot plus
/// `metrics.csv`.
pub fn write_run(snapshots: &[Snapshot], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in snapshots {
        write_density_csv(s, &dir.join(format!("density_{:06}.csv", s.step)))?;
        write_pgm(s, &dir.join(format!("density_{:06}.pgm", s.step)))?;
    }
    write_metrics_csv(snapshots, &dir.join("metrics.csv"))
}
