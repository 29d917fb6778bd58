//! Crossed probabilistic finite-state automata.
//!
//! A machine maps the recent history of a source stream to the probability
//! that the target stream fires `delay` days later. Histories are grouped
//! into states by a pruned context tree whose leaves are merged when their
//! empirical rates agree within a tolerance.

mod infer;
mod record;
mod stats;

use serde::{Deserialize, Serialize};

pub use infer::infer_xpfsa;
pub use record::{read_record, record_len, write_record};
pub use stats::{check_lengths, collect_from_codes, collect_stats, node_index, HistoryCodes, SuffixStats, MAX_DEPTH};

use crate::error::{Error, Result};

/// Tree entry for a context that is refined further.
pub const INTERNAL: u16 = u16::MAX;
/// Tree entry below a leaf.
pub const ABSENT: u16 = u16::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XpfsaParams {
    /// Maximum source history length `L`, days.
    pub depth: usize,
    /// Merge tolerance on leaf rates.
    pub epsilon: f64,
    /// Minimum sample count for a context to be split off.
    pub n_min: u64,
}

impl Default for XpfsaParams {
    fn default() -> Self {
        XpfsaParams {
            depth: 7,
            epsilon: 0.05,
            n_min: 10,
        }
    }
}

impl XpfsaParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > MAX_DEPTH {
            return Err(Error::InvalidParam(format!("history depth must be in 1..={MAX_DEPTH}, got {}", self.depth)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParam(format!("epsilon must be in [0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Binary entropy in bits, `h(0) = h(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Xpfsa {
    delay: usize,
    depth: usize,
    used_depth: usize,
    degenerate: bool,
    marginal: f64,
    gamma: f64,
    /// Heap-ordered context tree over suffixes of length `0..=depth`:
    /// a state index, [`INTERNAL`] or [`ABSENT`].
    tree: Vec<u16>,
    transitions: Vec<[u16; 2]>,
    emissions: Vec<f64>,
    /// State per `used_depth`-bit history code.
    lut: Vec<u16>,
}

impl Xpfsa {
    pub(crate) fn single_state(delay: usize, depth: usize, marginal: f64, degenerate: bool) -> Self {
        let mut tree = vec![ABSENT; (1usize << (depth + 1)) - 1];
        tree[0] = 0;
        Self::from_parts(delay, depth, 0, degenerate, marginal, 0.0, tree, vec![[0, 0]], vec![marginal])
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        delay: usize,
        depth: usize,
        used_depth: usize,
        degenerate: bool,
        marginal: f64,
        gamma: f64,
        tree: Vec<u16>,
        transitions: Vec<[u16; 2]>,
        emissions: Vec<f64>,
    ) -> Self {
        let lut = (0..1usize << used_depth).map(|code| walk(&tree, code, used_depth).unwrap_or(0)).collect();
        Xpfsa {
            delay,
            depth,
            used_depth,
            degenerate,
            marginal,
            gamma,
            tree,
            transitions,
            emissions,
            lut,
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// History depth the machine was inferred with.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Longest context actually used by the tree.
    pub fn used_depth(&self) -> usize {
        self.used_depth
    }

    /// Set when too few samples were available to learn anything.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn marginal(&self) -> f64 {
        self.marginal
    }

    /// Coefficient of causality on the inference sample.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_states(&self) -> usize {
        self.emissions.len()
    }

    pub fn emissions(&self) -> &[f64] {
        &self.emissions
    }

    pub fn emit(&self, state: usize) -> f64 {
        self.emissions[state]
    }

    pub fn transition(&self, state: usize, symbol: bool) -> usize {
        self.transitions[state][symbol as usize] as usize
    }

    pub fn transitions(&self) -> &[[u16; 2]] {
        &self.transitions
    }

    pub(crate) fn tree(&self) -> &[u16] {
        &self.tree
    }

    /// State of a history given oldest first, by its longest suffix in the
    /// tree. `None` when the history is too short to reach a leaf.
    pub fn resolve(&self, history: &[bool]) -> Option<usize> {
        let (mut l, mut c) = (0usize, 0usize);
        loop {
            let v = self.tree[node_index(l, c)];
            if v != INTERNAL {
                return Some(v as usize);
            }
            if l >= history.len() {
                return None;
            }
            c |= (history[history.len() - 1 - l] as usize) << l;
            l += 1;
        }
    }

    /// Probability that the target fires `delay` steps after the end of
    /// `history` (oldest first). Falls back to the marginal rate when the
    /// history cannot be resolved.
    pub fn evaluate(&self, history: &[bool]) -> f64 {
        match self.resolve(history) {
            Some(q) => self.emissions[q],
            None => self.marginal,
        }
    }

    /// State of a packed history code (bit 0 newest) holding at least
    /// `used_depth` valid symbols.
    #[inline]
    pub fn state_of_code(&self, code: u16) -> usize {
        self.lut[code as usize & (self.lut.len() - 1)] as usize
    }

    #[inline]
    pub fn evaluate_code(&self, code: u16) -> f64 {
        self.emissions[self.state_of_code(code)]
    }

    /// Runs the transition function from `state` over `symbols`.
    pub fn run(&self, mut state: usize, symbols: &[bool]) -> usize {
        for &s in symbols {
            state = self.transition(state, s);
        }
        state
    }
}

fn walk(tree: &[u16], code: usize, max_len: usize) -> Option<u16> {
    let (mut l, mut c) = (0usize, 0usize);
    loop {
        let v = tree[node_index(l, c)];
        if v != INTERNAL {
            return Some(v);
        }
        if l >= max_len {
            return None;
        }
        c |= ((code >> l) & 1) << l;
        l += 1;
    }
}

/// `1 - H(target | state) / H(target)` over the sample times the machine
/// would be trained on, using the empirical target rate of each state.
pub fn coefficient_of_causality(machine: &Xpfsa, source: &[bool], target: &[bool], delay: usize) -> Result<f64> {
    let depth = machine.depth();
    check_lengths(source.len(), target.len(), delay, depth)?;
    let codes = HistoryCodes::new(source, depth);
    let mut counts = vec![(0u64, 0u64); machine.n_states()];
    let (mut n, mut n1) = (0u64, 0u64);
    for t in depth..source.len() - delay {
        let q = machine.state_of_code(codes.codes[t]);
        let y = target[t + delay] as u64;
        counts[q].0 += 1;
        counts[q].1 += y;
        n += 1;
        n1 += y;
    }
    let h = binary_entropy(n1 as f64 / n as f64);
    let cond = counts
        .iter()
        .filter(|c| c.0 > 0)
        .map(|&(a, b)| a as f64 * binary_entropy(b as f64 / a as f64))
        .sum::<f64>()
        / n as f64;
    Ok(infer::gamma_from(h, cond))
}

/// Collects statistics and infers in one call.
pub fn learn(source: &[bool], target: &[bool], delay: usize, params: &XpfsaParams) -> Result<Xpfsa> {
    params.validate()?;
    let stats = collect_stats(source, target, delay, params.depth)?;
    infer_xpfsa(&stats, params.epsilon, params.n_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_copy(m: usize, lag: usize, flip: f64, seed: u64) -> (Vec<bool>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
        let tgt = (0..m)
            .map(|t| if t >= lag { src[t - lag] ^ rng.random_bool(flip) } else { rng.random_bool(0.5) })
            .collect();
        (src, tgt)
    }

    #[test]
    fn independent_streams_collapse_to_one_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let src: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.5)).collect();
        let tgt: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.3)).collect();
        let m = learn(&src, &tgt, 1, &XpfsaParams::default()).unwrap();
        assert_eq!(m.n_states(), 1);
        assert!(!m.is_degenerate());
        assert!((m.emit(0) - 0.3).abs() < 0.015, "{}", m.emit(0));
        assert_eq!(m.gamma(), 0.0);
        let g = coefficient_of_causality(&m, &src, &tgt, 1).unwrap();
        assert!(g <= 0.02, "{g}");
        for h in [&[true][..], &[false, true, true], &[]] {
            assert_eq!(m.evaluate(h), m.emit(0));
        }
    }

    #[test]
    fn planted_noisy_copy_has_two_states() {
        // target[t+1] = source[t] flipped with probability 0.1
        let (src, tgt) = noisy_copy(10_000, 1, 0.1, 3);
        let m = learn(&src, &tgt, 1, &XpfsaParams::default()).unwrap();
        assert_eq!(m.n_states(), 2);
        assert!((m.emit(0) - 0.1).abs() < 0.03, "{:?}", m.emissions());
        assert!((m.emit(1) - 0.9).abs() < 0.03, "{:?}", m.emissions());
        assert!((m.evaluate(&[false, true]) - 0.9).abs() < 0.03);
        assert!((m.evaluate(&[true, false]) - 0.1).abs() < 0.03);
        // history "1" leads to the high state whatever the current one is
        for q in 0..2 {
            assert_eq!(m.transition(q, true), 1);
            assert_eq!(m.transition(q, false), 0);
        }
        // balanced target: 1 - h(0.1) = 0.531
        let expect = 1.0 - binary_entropy(0.1);
        assert!((expect - 0.531).abs() < 1e-3);
        assert!((m.gamma() - expect).abs() < 0.05, "{}", m.gamma());
        let g = coefficient_of_causality(&m, &src, &tgt, 1).unwrap();
        assert!((g - m.gamma()).abs() < 1e-12);
    }

    #[test]
    fn period_two_source_copied_exactly() {
        let src: Vec<bool> = (0..400).map(|t| t % 2 == 1).collect();
        let mut tgt = vec![false; 400];
        tgt[1..].copy_from_slice(&src[..399]);
        let m = learn(&src, &tgt, 1, &XpfsaParams::default()).unwrap();
        assert_eq!(m.n_states(), 2);
        assert_eq!(m.emissions(), &[0.0, 1.0]);
        assert_eq!(m.evaluate(&[true]), 1.0);
        assert_eq!(m.evaluate(&[true, false]), 0.0);
        // the machine alternates with its input
        assert_eq!(m.run(0, &[true]), 1);
        assert_eq!(m.run(1, &[false]), 0);
        assert!((m.gamma() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_target_has_zero_gamma() {
        let (src, _) = noisy_copy(2000, 1, 0.0, 5);
        let tgt = vec![true; 2000];
        let m = learn(&src, &tgt, 2, &XpfsaParams::default()).unwrap();
        assert_eq!(m.gamma(), 0.0);
        assert_eq!(coefficient_of_causality(&m, &src, &tgt, 2).unwrap(), 0.0);
        assert_eq!(m.evaluate(&[false]), 1.0);
    }

    #[test]
    fn too_few_samples_is_degenerate() {
        let src = vec![true, false, true, true, false, true];
        let tgt = vec![false, true, true, false, true, true];
        let m = learn(&src, &tgt, 1, &XpfsaParams { depth: 2, epsilon: 0.05, n_min: 10 }).unwrap();
        assert!(m.is_degenerate());
        assert_eq!(m.n_states(), 1);
        // t = 2, 3, 4 with labels tgt[3..6]
        assert!((m.marginal() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.evaluate(&[true]), m.marginal());
    }

    #[test]
    fn lag_three_resolved_through_the_tree() {
        let (src, tgt) = noisy_copy(20_000, 4, 0.05, 9);
        let m = learn(&src, &tgt, 1, &XpfsaParams::default()).unwrap();
        // target[t+1] = source[t-3]: the fourth-newest bit decides
        assert_eq!(m.used_depth(), 4);
        assert!((m.evaluate(&[true, false, false, false]) - 0.95).abs() < 0.03);
        assert!((m.evaluate(&[false, true, true, true]) - 0.05).abs() < 0.03);
        // unresolvable short history falls back to the marginal rate
        assert_eq!(m.evaluate(&[true]), m.marginal());
        assert_eq!(m.evaluate(&[]), m.marginal());
    }

    #[test]
    fn three_state_generator_recovered() {
        // target[t+1] depends on (source[t-1], source[t]) through three rates
        let rate = |a: bool, b: bool| match (a, b) {
            (false, false) => 0.2,
            (true, true) => 0.8,
            _ => 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m_len = 100_000;
        let src: Vec<bool> = (0..m_len).map(|_| rng.random_bool(0.5)).collect();
        let mut tgt = vec![false; m_len];
        for t in 1..m_len - 1 {
            tgt[t + 1] = rng.random_bool(rate(src[t - 1], src[t]));
        }
        let m = learn(&src, &tgt, 1, &XpfsaParams::default()).unwrap();
        assert_eq!(m.n_states(), 3);
        for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
            let p = rate(a, b);
            let n_visits = m_len as f64 * if p == 0.5 { 0.5 } else { 0.25 };
            let se = (p * (1.0 - p) / n_visits).sqrt();
            let got = m.evaluate(&[a, b]);
            assert!((got - p).abs() < 3.0 * se, "{a}{b}: {got} vs {p}");
        }
    }

    #[test]
    fn rejects_bad_params() {
        let v = vec![true; 100];
        assert!(learn(&v, &v, 1, &XpfsaParams { epsilon: -0.1, ..Default::default() }).is_err());
        assert!(learn(&v, &v, 1, &XpfsaParams { depth: 0, ..Default::default() }).is_err());
        assert!(learn(&v, &v, 95, &XpfsaParams::default()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn smaller_epsilon_never_merges_more(seed in 0u64..200, e1 in 0.0f64..0.3, e2 in 0.0f64..0.3, lag in 1usize..4) {
            let (src, tgt) = noisy_copy(3000, lag, 0.2, seed);
            let st = collect_stats(&src, &tgt, 1, 5).unwrap();
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a = infer_xpfsa(&st, lo, 10).unwrap();
            let b = infer_xpfsa(&st, hi, 10).unwrap();
            proptest::prop_assert!(a.n_states() >= b.n_states());
        }

        #[test]
        fn outputs_are_probabilities(bits in proptest::collection::vec(proptest::bool::ANY, 40..400),
                                     k in 0usize..4, depth in 1usize..6, eps in 0.0f64..0.5,
                                     probe in proptest::collection::vec(proptest::bool::ANY, 0..8)) {
            let tgt: Vec<bool> = bits.iter().enumerate().map(|(i, &b)| b ^ (i % 3 == 0)).collect();
            let m = learn(&bits, &tgt, k, &XpfsaParams { depth, epsilon: eps, n_min: 3 }).unwrap();
            let p = m.evaluate(&probe);
            proptest::prop_assert!((0.0..=1.0).contains(&p));
            proptest::prop_assert!((0.0..=1.0).contains(&m.gamma()));
            if m.n_states() == 1 {
                proptest::prop_assert_eq!(m.gamma(), 0.0);
            }
            for q in 0..m.n_states() {
                for s in [false, true] {
                    proptest::prop_assert!(m.transition(q, s) < m.n_states());
                }
            }
            let g = coefficient_of_causality(&m, &bits, &tgt, k).unwrap();
            proptest::prop_assert!((g - m.gamma()).abs() < 1e-9);
        }
    }
}
