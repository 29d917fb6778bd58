//! Net persistence.
//!
//! `edges.bin` (little endian):
//!
//! ```text
//! magic "GNEDGES_" | version u16
//! grid: origin_lat f64 | origin_lon f64 | cell_height f64 | cell_width f64 | rows u32 | cols u32
//! max_delay u32 | depth u8 | gamma_min f64 | retain u8 | attempted u64
//! n_vars u32 | { tile u32 | class u8 } * n_vars
//! n_edges u64 | { src_tile u32 | src_class u8 | dst_tile u32 | dst_class u8 | machine record } * n_edges
//! ```
//!
//! Edges are grouped by target in variable order. `edges.idx` maps each
//! target to its slice of the edge array:
//!
//! ```text
//! magic "GNEDGIDX" | version u16 | n u32 | { tile u32 | class u8 | first u64 | count u32 } * n
//! ```

use std::io::Write;

use super::{EdgeKey, GrangerEdge, GrangerNet, Retain};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::ingest::EventClass;
use crate::quantize::{TileGrid, TileId, VarId};
use crate::xpfsa::{read_record, record_len, write_record};

const MAGIC: &[u8; 8] = b"GNEDGES_";
const IDX_MAGIC: &[u8; 8] = b"GNEDGIDX";
const VERSION: u16 = 1;

pub const EDGE_CSV_HEADER: [&str; 7] = ["src_tile", "src_class", "dst_tile", "dst_class", "delay", "gamma", "n_states"];

fn put_var(w: &mut ByteWriter, v: VarId) {
    w.u32(v.tile.0);
    w.u8(v.class.code());
}

fn get_var(r: &mut ByteReader<'_>) -> Result<VarId> {
    let tile = TileId(r.u32()?);
    let code = r.u8()?;
    let class = EventClass::from_code(code).ok_or_else(|| Error::Format(format!("class code {code}")))?;
    Ok(VarId { tile, class })
}

/// Serializes to (`edges.bin`, `edges.idx`) contents.
pub fn write_net(net: &GrangerNet) -> (Vec<u8>, Vec<u8>) {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    let g = &net.grid;
    w.f64(g.origin_lat);
    w.f64(g.origin_lon);
    w.f64(g.cell_height);
    w.f64(g.cell_width);
    w.u32(g.rows);
    w.u32(g.cols);
    w.u32(net.max_delay);
    w.u8(net.depth as u8);
    w.f64(net.gamma_min);
    w.u8(net.retain.code());
    w.u64(net.attempted);
    w.u32(net.vars.len() as u32);
    for &v in &net.vars {
        put_var(&mut w, v);
    }
    w.u64(net.retained());

    let mut idx = ByteWriter::new();
    idx.bytes(IDX_MAGIC);
    idx.u16(VERSION);
    idx.u32(net.in_edges.len() as u32);
    let mut first = 0u64;
    for (&target, list) in &net.in_edges {
        put_var(&mut idx, target);
        idx.u64(first);
        idx.u32(list.len() as u32);
        first += list.len() as u64;
        for e in list {
            put_var(&mut w, e.key.source);
            put_var(&mut w, e.key.target);
            write_record(&mut w, &e.machine);
        }
    }
    (w.into_inner(), idx.into_inner())
}

pub fn read_net(bin: &[u8], idx: &[u8]) -> Result<GrangerNet> {
    let mut r = ByteReader::new(bin);
    r.expect_magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported edge store version {version}")));
    }
    let grid = TileGrid {
        origin_lat: r.f64()?,
        origin_lon: r.f64()?,
        cell_height: r.f64()?,
        cell_width: r.f64()?,
        rows: r.u32()?,
        cols: r.u32()?,
    };
    let max_delay = r.u32()?;
    let depth = r.u8()? as usize;
    let gamma_min = r.f64()?;
    let retain = Retain::from_code(r.u8()?).ok_or_else(|| Error::Format("bad retain flag".into()))?;
    let attempted = r.u64()?;
    let n_vars = r.u32()? as usize;
    let vars = (0..n_vars).map(|_| get_var(&mut r)).collect::<Result<Vec<_>>>()?;
    let n_edges = r.u64()? as usize;
    let edge_len = 10 + record_len(depth.max(1));
    if r.remaining() != n_edges * edge_len {
        return Err(Error::Format(format!(
            "edge store holds {} bytes for {n_edges} edges of {edge_len} bytes",
            r.remaining()
        )));
    }
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let source = get_var(&mut r)?;
        let target = get_var(&mut r)?;
        let machine = read_record(&mut r)?;
        if machine.depth() != depth || machine.delay() as u32 > max_delay {
            return Err(Error::Format(format!("edge {source} -> {target} disagrees with the store header")));
        }
        edges.push(GrangerEdge {
            key: EdgeKey {
                source,
                target,
                delay: machine.delay() as u32,
            },
            machine,
        });
    }

    // the index must describe exactly the grouping on disk
    let mut ir = ByteReader::new(idx);
    ir.expect_magic(IDX_MAGIC)?;
    if ir.u16()? != VERSION {
        return Err(Error::Format("unsupported edge index version".into()));
    }
    let n = ir.u32()? as usize;
    let mut covered = 0usize;
    for _ in 0..n {
        let target = get_var(&mut ir)?;
        let first = ir.u64()? as usize;
        let count = ir.u32()? as usize;
        if first != covered || first + count > edges.len() || edges[first..first + count].iter().any(|e| e.key.target != target) {
            return Err(Error::Format(format!("edge index entry for {target} does not match the store")));
        }
        covered += count;
    }
    if covered != edges.len() || ir.remaining() != 0 {
        return Err(Error::Format("edge index does not cover the store".into()));
    }
    Ok(GrangerNet::new(grid, vars, max_delay, depth, gamma_min, retain, attempted, edges))
}

/// `src_tile,src_class,dst_tile,dst_class,delay,gamma,n_states`, one row per
/// retained edge in store order.
pub fn write_edge_csv<W: Write>(writer: W, net: &GrangerNet) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EDGE_CSV_HEADER)?;
    for e in net.edges() {
        w.write_record([
            e.key.source.tile.0.to_string(),
            e.key.source.class.name().to_string(),
            e.key.target.tile.0.to_string(),
            e.key.target.class.name().to_string(),
            e.key.delay.to_string(),
            format!("{:.6}", e.gamma()),
            e.machine.n_states().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
