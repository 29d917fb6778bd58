use super::stats::{node_index, SuffixStats};
use super::{binary_entropy, Xpfsa, ABSENT, INTERNAL};
use crate::error::{Error, Result};

/// Relative slack when comparing description lengths, so that exact ties
/// (an uninformative split) keep the simpler tree.
const COST_TOL: f64 = 1e-9;

struct Pruned {
    /// Leaf suffixes as (len, code).
    leaves: Vec<(usize, usize)>,
}

/// Two-part code length of the best subtree rooted at (len, code), in bits.
/// Leaves pay `n * h(n1/n)` for their labels plus `penalty` for the parameter.
fn best_subtree(stats: &SuffixStats, n_min: u64, penalty: f64, len: usize, code: usize, out: &mut Vec<(usize, usize)>) -> f64 {
    let (n, n1) = stats.count(len, code);
    let leaf = n as f64 * binary_entropy(n1 as f64 / n as f64) + penalty;
    if len < stats.depth {
        let c0 = code;
        let c1 = code | (1 << len);
        if stats.count(len + 1, c0).0 >= n_min && stats.count(len + 1, c1).0 >= n_min {
            let mark = out.len();
            let split = best_subtree(stats, n_min, penalty, len + 1, c0, out)
                + best_subtree(stats, n_min, penalty, len + 1, c1, out);
            if split < leaf - COST_TOL * leaf.max(1.0) {
                return split;
            }
            out.truncate(mark);
        }
    }
    out.push((len, code));
    leaf
}

fn prune(stats: &SuffixStats, n_min: u64) -> Pruned {
    let penalty = 0.5 * (stats.total().0 as f64).log2();
    let mut leaves = Vec::new();
    best_subtree(stats, n_min, penalty, 0, 0, &mut leaves);
    Pruned { leaves }
}

/// Covers the sorted leaf rates with the fewest intervals of width `epsilon`.
/// Returns, per leaf in input order, its group index (groups ordered by rate).
fn merge_groups(rates: &[f64], epsilon: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]).then(a.cmp(&b)));
    let mut group = vec![0; rates.len()];
    let mut g = 0;
    let mut start = f64::NAN;
    for (i, &leaf) in order.iter().enumerate() {
        if i == 0 {
            start = rates[leaf];
        } else if rates[leaf] - start > epsilon {
            g += 1;
            start = rates[leaf];
        }
        group[leaf] = g;
    }
    group
}

/// Infers a machine from suffix statistics.
///
/// The context tree is grown to `stats.depth` where both children of a node
/// carry at least `n_min` samples and pruned back by description length. Leaf
/// contexts whose rates fall inside a common `epsilon` window share a state.
/// If the root itself has fewer than `n_min` samples the result is a flagged
/// single-state machine emitting the marginal rate.
pub fn infer_xpfsa(stats: &SuffixStats, epsilon: f64, n_min: u64) -> Result<Xpfsa> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParam(format!("merge tolerance must be in [0, 1], got {epsilon}")));
    }
    let (n_root, n1_root) = stats.total();
    if n_root == 0 {
        return Err(Error::InsufficientData("no samples in suffix statistics".into()));
    }
    let marginal = n1_root as f64 / n_root as f64;
    let depth = stats.depth;
    if n_root < n_min.max(1) {
        return Ok(Xpfsa::single_state(stats.delay, depth, marginal, true));
    }

    let pruned = prune(stats, n_min);
    let rates: Vec<f64> = pruned
        .leaves
        .iter()
        .map(|&(len, code)| {
            let (n, n1) = stats.count(len, code);
            n1 as f64 / n as f64
        })
        .collect();
    let group = merge_groups(&rates, epsilon);
    let n_states = group.iter().max().map_or(1, |g| g + 1);

    let mut tree = vec![ABSENT; (1usize << (depth + 1)) - 1];
    let mut used_depth = 0;
    for (&(len, code), &g) in pruned.leaves.iter().zip(&group) {
        tree[node_index(len, code)] = g as u16;
        used_depth = used_depth.max(len);
        // every proper ancestor is internal
        for l in 0..len {
            tree[node_index(l, code & ((1 << l) - 1))] = INTERNAL;
        }
    }

    let mut pooled = vec![(0u64, 0u64); n_states];
    // representative leaf per state: the most visited one, lowest heap index on ties
    let mut rep: Vec<Option<(u64, usize, usize)>> = vec![None; n_states];
    for (&(len, code), &g) in pruned.leaves.iter().zip(&group) {
        let (n, n1) = stats.count(len, code);
        pooled[g].0 += n;
        pooled[g].1 += n1;
        let better = match rep[g] {
            None => true,
            Some((bn, bl, bc)) => n > bn || (n == bn && node_index(len, code) < node_index(bl, bc)),
        };
        if better {
            rep[g] = Some((n, len, code));
        }
    }
    let emissions: Vec<f64> = pooled.iter().map(|&(n, n1)| n1 as f64 / n as f64).collect();

    let gamma = if n_states == 1 {
        0.0
    } else {
        let h = binary_entropy(marginal);
        let cond: f64 = pooled
            .iter()
            .zip(&emissions)
            .map(|(&(n, _), &p)| n as f64 * binary_entropy(p))
            .sum::<f64>()
            / n_root as f64;
        gamma_from(h, cond)
    };

    let transitions = rep
        .iter()
        .map(|r| {
            let (_, len, code) = r.expect("every state owns a leaf");
            [0u8, 1u8].map(|a| extend(&tree, stats, len, code, a) as u16)
        })
        .collect();

    Ok(Xpfsa::from_parts(
        stats.delay,
        depth,
        used_depth,
        false,
        marginal,
        gamma,
        tree,
        transitions,
        emissions,
    ))
}

/// State reached by appending symbol `a` to the suffix (len, code). The new
/// suffix is resolved against the tree; if it ends at an internal node, the
/// walk continues into the child seen more often in training.
fn extend(tree: &[u16], stats: &SuffixStats, len: usize, code: usize, a: u8) -> usize {
    let depth = stats.depth;
    let new_len = (len + 1).min(depth);
    let new_code = ((code << 1) | a as usize) & ((1 << new_len) - 1);
    let (mut l, mut c) = (0usize, 0usize);
    loop {
        let v = tree[node_index(l, c)];
        if v != INTERNAL {
            debug_assert!(v != ABSENT);
            return v as usize;
        }
        let bit = if l < new_len {
            (new_code >> l) & 1
        } else {
            let (n0, _) = stats.count(l + 1, c);
            let (n1, _) = stats.count(l + 1, c | (1 << l));
            (n1 > n0) as usize
        };
        c |= bit << l;
        l += 1;
    }
}

pub(super) fn gamma_from(h_marginal: f64, h_conditional: f64) -> f64 {
    if h_marginal <= 0.0 {
        return 0.0;
    }
    (1.0 - h_conditional / h_marginal).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_cover_groups() {
        let g = merge_groups(&[0.5, 0.1, 0.12, 0.9, 0.16, 0.88], 0.05);
        assert_eq!(g, vec![2, 0, 0, 3, 1, 3]);
        assert_eq!(merge_groups(&[0.3, 0.3], 0.0), vec![0, 0]);
        assert_eq!(merge_groups(&[0.2], 0.05), vec![0]);
    }

    #[test]
    fn gamma_convention() {
        assert_eq!(gamma_from(0.0, 0.0), 0.0);
        assert_eq!(gamma_from(1.0, 1.2), 0.0);
        assert!((gamma_from(1.0, 0.25) - 0.75).abs() < 1e-15);
    }
}
