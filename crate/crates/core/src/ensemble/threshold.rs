use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Highest recall whose false positive rate stays within the cap.
    MaxRecallUnderFpr { cap: f64 },
    MaxF1,
}

impl Default for Objective {
    fn default() -> Self {
        Objective::MaxRecallUnderFpr { cap: 0.2 }
    }
}

/// Decision threshold: the decision is `score >= tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub tau: f64,
    /// Objective value reached on the slice.
    pub value: f64,
    pub recall: f64,
    pub fpr: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn at(scores: &[f64], labels: &[bool], tau: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= tau, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Sweeps every distinct score (and +inf) as a candidate threshold.
/// Ties in the objective go to the larger threshold.
pub fn tune_threshold(scores: &[f64], labels: &[bool], objective: Objective) -> Result<ThresholdChoice> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::EmptySlice);
    }
    if let Objective::MaxRecallUnderFpr { cap } = objective {
        if !(0.0..=1.0).contains(&cap) {
            return Err(Error::InvalidParam(format!("fpr cap must be in [0, 1], got {cap}")));
        }
    }
    let pos = labels.iter().filter(|&&y| y).count();
    let choose = |tau: f64, value: f64| {
        let c = Confusion::at(scores, labels, tau);
        ThresholdChoice {
            tau,
            value,
            recall: c.recall(),
            fpr: c.fpr(),
            f1: c.f1(),
        }
    };
    if pos == scores.len() {
        log::warn!("validation slice is all positive; flagging every score");
        let tau = scores.iter().copied().fold(f64::INFINITY, f64::min);
        return Ok(choose(tau, 1.0));
    }
    if pos == 0 {
        log::warn!("validation slice has no positives; flagging nothing");
        return Ok(choose(f64::INFINITY, 0.0));
    }

    // descending sweep: lowering tau through each distinct score
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let neg = (scores.len() - pos) as f64;
    let pos_f = pos as f64;
    let value_of = |tp: u64, fp: u64| match objective {
        Objective::MaxRecallUnderFpr { cap } => {
            if fp as f64 / neg <= cap {
                Some(tp as f64 / pos_f)
            } else {
                None
            }
        }
        Objective::MaxF1 => {
            let fn_ = pos as u64 - tp;
            Some(ratio(2 * tp, 2 * tp + fp + fn_))
        }
    };
    let mut best = (f64::INFINITY, value_of(0, 0).unwrap_or(f64::NEG_INFINITY));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let tau = scores[order[i]];
        while i < order.len() && scores[order[i]] == tau {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if let Some(v) = value_of(tp, fp) {
            if v > best.1 {
                best = (tau, v);
            }
        }
    }
    Ok(choose(best.0, best.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores() {
        let scores = [0.1, 0.2, 0.3, 0.7, 0.8];
        let labels = [false, false, false, true, true];
        for obj in [Objective::default(), Objective::MaxF1] {
            let c = tune_threshold(&scores, &labels, obj).unwrap();
            assert!(c.tau > 0.3 && c.tau <= 0.7, "{c:?}");
            assert_eq!((c.recall, c.fpr), (1.0, 0.0));
        }
    }

    #[test]
    fn fpr_cap_matches_brute_force() {
        let scores = [0.05, 0.1, 0.15, 0.2, 0.3, 0.35, 0.4, 0.5, 0.55, 0.6, 0.7, 0.8, 0.9, 0.95, 0.3, 0.5];
        let labels = [
            false, true, false, false, true, false, false, true, false, false, true, false, true, true, false, true,
        ];
        let got = tune_threshold(&scores, &labels, Objective::MaxRecallUnderFpr { cap: 0.2 }).unwrap();
        // brute force: every observed score plus +inf
        let mut best: Option<(f64, f64)> = None;
        let mut cands: Vec<f64> = scores.to_vec();
        cands.push(f64::INFINITY);
        for &t in &cands {
            let c = Confusion::at(&scores, &labels, t);
            if c.fpr() <= 0.2 {
                let better = match best {
                    None => true,
                    Some((bt, br)) => c.recall() > br || (c.recall() == br && t > bt),
                };
                if better {
                    best = Some((t, c.recall()));
                }
            }
        }
        let (bt, br) = best.unwrap();
        assert_eq!(got.tau, bt);
        assert_eq!(got.recall, br);
        assert!(got.fpr <= 0.2);
        // 9 negatives: one false positive fits under the cap, the second
        // arrives at 0.6
        assert_eq!(bt, 0.7);
        assert_eq!(br, 3.0 / 7.0);
    }

    #[test]
    fn f1_matches_brute_force() {
        let scores = [0.9, 0.8, 0.8, 0.6, 0.4, 0.3, 0.3, 0.1];
        let labels = [true, false, true, true, false, true, false, false];
        let got = tune_threshold(&scores, &labels, Objective::MaxF1).unwrap();
        let best = scores
            .iter()
            .map(|&t| (Confusion::at(&scores, &labels, t).f1(), t))
            .fold((0.0, 0.0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 > a.1) { b } else { a });
        assert_eq!((got.f1, got.tau), best);
    }

    #[test]
    fn degenerate_slices() {
        let c = tune_threshold(&[0.4, 0.2, 0.9], &[true; 3], Objective::default()).unwrap();
        assert_eq!(c.tau, 0.2);
        assert_eq!(c.recall, 1.0);
        let c = tune_threshold(&[0.4, 0.2], &[false; 2], Objective::MaxF1).unwrap();
        assert_eq!(c.tau, f64::INFINITY);
        assert!(matches!(tune_threshold(&[], &[], Objective::MaxF1), Err(Error::EmptySlice)));
    }
}
