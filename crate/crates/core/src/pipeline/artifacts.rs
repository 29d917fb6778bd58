//! Intermediate file formats private to the pipeline.
//!
//! Predictions (little endian):
//!
//! ```text
//! magic "GNPREDS_" | version u16 | n u64
//! { tile u32 | class u8 | issue_day u32 | pred_day u32 | score f64 | decision u8 | fallback u8 } * n
//! ```

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::evaluate::PredictionRecord;
use crate::ingest::{ClassifiedEvent, EventClass};
use crate::quantize::VarId;

const PRED_MAGIC: &[u8; 8] = b"GNPREDS_";
const PRED_VERSION: u16 = 1;

pub fn write_predictions(records: &[PredictionRecord]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(PRED_MAGIC);
    w.u16(PRED_VERSION);
    w.u64(records.len() as u64);
    for r in records {
        w.u32(r.var.tile.0);
        w.u8(r.var.class.code());
        w.u32(r.issue_day as u32);
        w.u32(r.pred_day as u32);
        w.f64(r.score);
        w.u8(r.decision as u8);
        w.u8(r.fallback as u8);
    }
    w.into_inner()
}

pub fn read_predictions(data: &[u8]) -> Result<Vec<PredictionRecord>> {
    let mut r = ByteReader::new(data);
    r.expect_magic(PRED_MAGIC)?;
    let v = r.u16()?;
    if v != PRED_VERSION {
        return Err(Error::Format(format!("predictions version {v}")));
    }
    let n = r.u64()? as usize;
    if n.checked_mul(23).is_none_or(|b| b != r.remaining()) {
        return Err(Error::Format(format!("{} bytes for {n} prediction records", r.remaining())));
    }
    (0..n)
        .map(|_| {
            let tile = r.u32()?;
            let code = r.u8()?;
            let class = EventClass::from_code(code).ok_or_else(|| Error::Format(format!("class code {code}")))?;
            Ok(PredictionRecord {
                var: VarId::new(tile, class),
                issue_day: r.u32()? as usize,
                pred_day: r.u32()? as usize,
                score: r.f64()?,
                decision: r.u8()? != 0,
                fallback: r.u8()? != 0,
            })
        })
        .collect()
}

pub fn write_classified(events: &[ClassifiedEvent]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in events {
        w.serialize(e).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_classified(data: &[u8]) -> Result<Vec<ClassifiedEvent>> {
    csv::Reader::from_reader(data)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Format(format!("classified events: {e}"))))
        .collect()
}
