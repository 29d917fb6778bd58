use crate::error::{Error, Result};

/// Block-entropy estimate over overlapping windows, bits.
fn block_entropy(values: &[bool], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let n_blocks = values.len() + 1 - k;
    let mut counts = vec![0u64; 1 << k];
    let mask = (1usize << k) - 1;
    let mut code = 0usize;
    for (i, &v) in values.iter().enumerate() {
        code = ((code << 1) | v as usize) & mask;
        if i + 1 >= k {
            counts[code] += 1;
        }
    }
    let n = n_blocks as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Entropy rate estimate `H(k) - H(k-1)` in bits per symbol.
///
/// Requires at least `8 * 2^k` symbols so that every block pattern can be
/// observed several times.
pub fn entropy_rate(values: &[bool], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParam("block length must be at least 1".into()));
    }
    if k > 24 || values.len() < 8usize << k {
        return Err(Error::InvalidParam(format!(
            "block length {k} too large for a stream of {} symbols",
            values.len()
        )));
    }
    let h = block_entropy(values, k) - block_entropy(values, k - 1);
    Ok(h.max(0.0))
}
