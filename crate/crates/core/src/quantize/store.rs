//! `StreamSet` persistence.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic "GNSTREAM" | version u16
//! origin_lat f64 | origin_lon f64 | cell_height f64 | cell_width f64 | rows u32 | cols u32
//! train_start i32 | holdout_start i32 | holdout_end i32      (days from CE)
//! n_classes u8 | class codes u8 * n_classes
//! n_streams u32 | { tile u32 | class u8 | bits: ceil(days / 8) bytes, LSB first } * n_streams
//! ```

use std::io::Write;

use chrono::{Datelike, NaiveDate};

use super::{EventStream, StreamSet, TileGrid, TimeWindow, VarId};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::ingest::EventClass;
use crate::quantize::TileId;

const MAGIC: &[u8; 8] = b"GNSTREAM";
const VERSION: u16 = 1;

fn date_code(d: NaiveDate) -> i32 {
    d.num_days_from_ce()
}

fn date_from_code(c: i32) -> Result<NaiveDate> {
    NaiveDate::from_num_days_from_ce_opt(c).ok_or_else(|| Error::Format(format!("bad date code {c}")))
}

pub fn write_stream_set(set: &StreamSet) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    let g = &set.grid;
    w.f64(g.origin_lat);
    w.f64(g.origin_lon);
    w.f64(g.cell_height);
    w.f64(g.cell_width);
    w.u32(g.rows);
    w.u32(g.cols);
    w.i32(date_code(set.window.train_start));
    w.i32(date_code(set.window.holdout_start));
    w.i32(date_code(set.window.holdout_end));
    w.u8(set.classes.len() as u8);
    for c in &set.classes {
        w.u8(c.code());
    }
    w.u32(set.len() as u32);
    for s in set.streams() {
        w.u32(s.var.tile.0);
        w.u8(s.var.class.code());
        let mut packed = vec![0u8; s.len().div_ceil(8)];
        for (i, &b) in s.values().iter().enumerate() {
            if b {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        w.bytes(&packed);
    }
    w.into_inner()
}

pub fn read_stream_set(data: &[u8]) -> Result<StreamSet> {
    let mut r = ByteReader::new(data);
    r.expect_magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported stream set version {version}")));
    }
    let grid = TileGrid {
        origin_lat: r.f64()?,
        origin_lon: r.f64()?,
        cell_height: r.f64()?,
        cell_width: r.f64()?,
        rows: r.u32()?,
        cols: r.u32()?,
    };
    let window = TimeWindow::new(
        date_from_code(r.i32()?)?,
        date_from_code(r.i32()?)?,
        date_from_code(r.i32()?)?,
    )?;
    let n_classes = r.u8()? as usize;
    let mut classes = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let code = r.u8()?;
        classes.push(EventClass::from_code(code).ok_or_else(|| Error::Format(format!("class code {code}")))?);
    }
    let n = r.u32()? as usize;
    let days = window.total_len();
    let mut streams = Vec::with_capacity(n);
    for _ in 0..n {
        let tile = TileId(r.u32()?);
        let code = r.u8()?;
        let class = EventClass::from_code(code).ok_or_else(|| Error::Format(format!("class code {code}")))?;
        let packed = r.take(days.div_ceil(8))?;
        let values = (0..days).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
        streams.push(EventStream::new(VarId { tile, class }, values));
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes in stream set", r.remaining())));
    }
    StreamSet::from_streams(grid, window, classes, streams)
}

/// Inspection export: `tile,tile_row,tile_col,class,train_ones,bits` with one
/// row per stream; `bits` is the full calendar as a 0/1 string.
pub fn write_stream_csv<W: Write>(writer: W, set: &StreamSet) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tile", "tile_row", "tile_col", "class", "train_ones", "bits"])?;
    let m = set.train_len();
    for s in set.streams() {
        let (row, col) = set.grid.row_col(s.var.tile);
        let bits: String = s.values().iter().map(|&b| if b { '1' } else { '0' }).collect();
        let ones = s.values()[..m].iter().filter(|&&b| b).count();
        w.write_record([
            s.var.tile.0.to_string(),
            row.to_string(),
            col.to_string(),
            s.var.class.name().to_string(),
            ones.to_string(),
            bits,
        ])?;
    }
    w.flush()?;
    Ok(())
}
