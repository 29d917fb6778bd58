use std::io::Write;

use super::regression::RegressionReport;
use super::response::{ResponseSurface, SignEntry};
use crate::quantize::TileGrid;

pub const SURFACE_CSV_HEADER: [&str; 6] = ["delta_v", "delta_u", "class", "mean_response", "stderr", "n_valid_tiles"];

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// One row per (cell, output class); invalid cells leave the numbers empty.
pub fn write_surface_csv<W: Write>(writer: W, surface: &ResponseSurface) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SURFACE_CSV_HEADER)?;
    for c in &surface.cells {
        for &class in &surface.outputs {
            let r = c.response.as_ref().and_then(|r| r.class(class));
            w.write_record([
                fmt(c.deltas[0]),
                fmt(c.deltas[1]),
                class.name().to_string(),
                r.map(|r| fmt(r.change.mean)).unwrap_or_default(),
                r.map(|r| fmt(r.change.stderr)).unwrap_or_default(),
                r.map_or(0, |r| r.n_valid_tiles).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-tile responses of every valid cell.
pub fn write_tile_response_csv<W: Write>(writer: W, surface: &ResponseSurface, grid: &TileGrid) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["delta_v", "delta_u", "tile_row", "tile_col", "class", "mean_response", "stderr"])?;
    for c in &surface.cells {
        let Some(r) = &c.response else { continue };
        for (v, m) in &r.tiles {
            let (row, col) = grid.row_col(v.tile);
            w.write_record([
                fmt(c.deltas[0]),
                fmt(c.deltas[1]),
                row.to_string(),
                col.to_string(),
                v.class.name().to_string(),
                fmt(m.mean),
                fmt(m.stderr),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sign_csv<W: Write>(writer: W, pattern: &[SignEntry]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["output", "input", "slope", "stderr", "sign"])?;
    for e in pattern {
        w.write_record([
            e.output.name().to_string(),
            e.input.name().to_string(),
            fmt(e.slope),
            fmt(e.stderr),
            e.sign.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_regression_csv<W: Write>(writer: W, rep: &RegressionReport) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["term", "estimate", "stderr"])?;
    for c in std::iter::once(&rep.intercept).chain(&rep.slopes) {
        w.write_record([c.name.clone(), fmt(c.estimate), fmt(c.stderr)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_regression_text<W: Write>(mut w: W, rep: &RegressionReport, response_name: &str) -> std::io::Result<()> {
    writeln!(w, "OLS of {response_name} on standardized SES covariates")?;
    writeln!(w, "observations: {} (unjoined tiles: {})", rep.n, rep.unjoined)?;
    for c in std::iter::once(&rep.intercept).chain(&rep.slopes) {
        writeln!(w, "  {:<16} {:>12.6} (se {:.6})", c.name, c.estimate, c.stderr)?;
    }
    if !rep.dropped.is_empty() {
        writeln!(w, "dropped: {}", rep.dropped.join(", "))?;
    }
    match rep.r_squared {
        Some(r2) => writeln!(w, "R^2: {r2:.6}"),
        None => writeln!(w, "R^2: undefined (constant response)"),
    }
}
