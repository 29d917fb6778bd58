use crate::error::{Error, Result};

/// Largest supported history depth.
pub const MAX_DEPTH: usize = 12;

/// Heap index of the suffix of length `len` whose symbols are packed in `code`
/// (bit 0 is the most recent symbol, bit `len-1` the oldest).
#[inline]
pub fn node_index(len: usize, code: usize) -> usize {
    (1usize << len) - 1 + code
}

/// Rolling depth-`depth` history codes of a source stream: `codes[t]` packs
/// `source[t]` in bit 0, `source[t-1]` in bit 1, and so on. Entries with
/// `t < depth - 1` hold truncated histories.
#[derive(Debug, Clone)]
pub struct HistoryCodes {
    pub depth: usize,
    pub codes: Vec<u16>,
}

impl HistoryCodes {
    pub fn new(source: &[bool], depth: usize) -> Self {
        assert!((1..=MAX_DEPTH).contains(&depth));
        let mask = (1u32 << depth) - 1;
        let mut code = 0u32;
        let codes = source
            .iter()
            .map(|&s| {
                code = ((code << 1) | s as u32) & mask;
                code as u16
            })
            .collect();
        HistoryCodes { depth, codes }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Sufficient statistics of one (source, target, delay) triple: for every
/// source-history suffix `s` with `|s| <= depth`, the number of sample times
/// whose history ends in `s` and how many of those saw `target[t + delay] = 1`.
///
/// Sample times are `t in depth ..= M - 1 - delay`, the same for every
/// suffix length, so child counts add up exactly to their parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixStats {
    pub depth: usize,
    pub delay: usize,
    pub n: Vec<u64>,
    pub n1: Vec<u64>,
}

impl SuffixStats {
    pub fn count(&self, len: usize, code: usize) -> (u64, u64) {
        let i = node_index(len, code);
        (self.n[i], self.n1[i])
    }

    /// Counts for a suffix written oldest-first, e.g. `&[true, false]` is "10".
    pub fn count_suffix(&self, suffix: &[bool]) -> (u64, u64) {
        let code = suffix
            .iter()
            .rev()
            .enumerate()
            .fold(0usize, |acc, (i, &b)| acc | ((b as usize) << i));
        self.count(suffix.len(), code)
    }

    pub fn total(&self) -> (u64, u64) {
        (self.n[0], self.n1[0])
    }
}

pub fn check_lengths(source_len: usize, target_len: usize, delay: usize, depth: usize) -> Result<()> {
    if source_len != target_len {
        return Err(Error::InvalidParam(format!(
            "source and target are misaligned ({source_len} vs {target_len} steps)"
        )));
    }
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::InvalidParam(format!("history depth must be in 1..={MAX_DEPTH}, got {depth}")));
    }
    if source_len <= depth + delay {
        return Err(Error::InsufficientData(format!(
            "stream length {source_len} must exceed depth {depth} + delay {delay}"
        )));
    }
    Ok(())
}

pub fn collect_stats(source: &[bool], target: &[bool], delay: usize, depth: usize) -> Result<SuffixStats> {
    check_lengths(source.len(), target.len(), delay, depth)?;
    let codes = HistoryCodes::new(source, depth);
    Ok(collect_from_codes(&codes, target, delay))
}

/// Fast path for sweeps: history codes are computed once per source.
/// Lengths must already satisfy [`check_lengths`].
pub fn collect_from_codes(codes: &HistoryCodes, target: &[bool], delay: usize) -> SuffixStats {
    let depth = codes.depth;
    let m = codes.len();
    debug_assert!(m > depth + delay && target.len() == m);
    let size = (1usize << (depth + 1)) - 1;
    let mut n = vec![0u64; size];
    let mut n1 = vec![0u64; size];
    let base = node_index(depth, 0);
    for t in depth..m - delay {
        let i = base + codes.codes[t] as usize;
        n[i] += 1;
        n1[i] += target[t + delay] as u64;
    }
    for len in (0..depth).rev() {
        for code in 0..(1usize << len) {
            let p = node_index(len, code);
            let c0 = node_index(len + 1, code);
            let c1 = node_index(len + 1, code | (1 << len));
            n[p] = n[c0] + n[c1];
            n1[p] = n1[c0] + n1[c1];
        }
    }
    SuffixStats { depth, delay, n, n1 }
}
