//! Fixed-width machine records.
//!
//! For history depth `L` every record has the same size, so a store can be
//! indexed by position. Layout (little endian):
//!
//! ```text
//! delay u32 | depth u8 | degenerate u8 | n_states u16 | used_depth u8
//! marginal f64 | gamma f64
//! tree u16 * (2^(L+1) - 1)
//! transitions (u16, u16) * 2^L      unused slots zero
//! emissions f64 * 2^L               unused slots zero
//! ```

use super::{Xpfsa, ABSENT, INTERNAL, MAX_DEPTH};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub fn record_len(depth: usize) -> usize {
    let leaves = 1usize << depth;
    4 + 1 + 1 + 2 + 1 + 8 + 8 + 2 * (2 * leaves - 1) + 4 * leaves + 8 * leaves
}

pub fn write_record(w: &mut ByteWriter, m: &Xpfsa) {
    let leaves = 1usize << m.depth();
    w.u32(m.delay() as u32);
    w.u8(m.depth() as u8);
    w.u8(m.is_degenerate() as u8);
    w.u16(m.n_states() as u16);
    w.u8(m.used_depth() as u8);
    w.f64(m.marginal());
    w.f64(m.gamma());
    for &v in m.tree() {
        w.u16(v);
    }
    for q in 0..leaves {
        let [a, b] = m.transitions().get(q).copied().unwrap_or([0, 0]);
        w.u16(a);
        w.u16(b);
    }
    for q in 0..leaves {
        w.f64(m.emissions().get(q).copied().unwrap_or(0.0));
    }
}

pub fn read_record(r: &mut ByteReader<'_>) -> Result<Xpfsa> {
    let delay = r.u32()? as usize;
    let depth = r.u8()? as usize;
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::Format(format!("machine depth {depth} out of range")));
    }
    let degenerate = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("bad degenerate flag {v}"))),
    };
    let n_states = r.u16()? as usize;
    let used_depth = r.u8()? as usize;
    let leaves = 1usize << depth;
    if n_states == 0 || n_states > leaves || used_depth > depth {
        return Err(Error::Format(format!("inconsistent machine header ({n_states} states, used depth {used_depth})")));
    }
    let marginal = r.f64()?;
    let gamma = r.f64()?;
    let mut tree = Vec::with_capacity(2 * leaves - 1);
    for _ in 0..2 * leaves - 1 {
        let v = r.u16()?;
        if v != INTERNAL && v != ABSENT && v as usize >= n_states {
            return Err(Error::Format(format!("tree refers to state {v} of {n_states}")));
        }
        tree.push(v);
    }
    let mut transitions = Vec::with_capacity(n_states);
    for q in 0..leaves {
        let t = [r.u16()?, r.u16()?];
        if q < n_states {
            if t.iter().any(|&s| s as usize >= n_states) {
                return Err(Error::Format(format!("transition out of range in state {q}")));
            }
            transitions.push(t);
        }
    }
    let mut emissions = Vec::with_capacity(n_states);
    for q in 0..leaves {
        let p = r.f64()?;
        if q < n_states {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Format(format!("emission {p} is not a probability")));
            }
            emissions.push(p);
        }
    }
    Ok(Xpfsa::from_parts(delay, depth, used_depth, degenerate, marginal, gamma, tree, transitions, emissions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xpfsa::{learn, XpfsaParams};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_exact(bits in proptest::collection::vec(any::<bool>(), 60..300), depth in 1usize..6, k in 0usize..3) {
            let tgt: Vec<bool> = bits.iter().skip(1).chain(std::iter::once(&true)).copied().collect();
            let m = learn(&bits, &tgt, k, &XpfsaParams { depth, epsilon: 0.05, n_min: 4 }).unwrap();
            let mut w = ByteWriter::new();
            write_record(&mut w, &m);
            let bytes = w.into_inner();
            prop_assert_eq!(bytes.len(), record_len(depth));
            let back = read_record(&mut ByteReader::new(&bytes)).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert!(read_record(&mut ByteReader::new(&bytes[..bytes.len() - 1])).is_err());
        }
    }
}
