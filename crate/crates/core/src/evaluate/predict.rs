use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::roc_auc;
use crate::ensemble::{SourceCodes, TargetModel};
use crate::error::{Error, Result};
use crate::ingest::EventClass;
use crate::net::GrangerNet;
use crate::quantize::{StreamSet, TileId, VarId};

/// One scored (variable, day). Days index the stream calendar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub var: VarId,
    pub issue_day: usize,
    pub pred_day: usize,
    pub score: f64,
    pub decision: bool,
    /// No fitted model existed; the training rate was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    pub records: Vec<PredictionRecord>,
    pub n_fallback_vars: usize,
}

/// Scores every variable of `set` at each prediction day, issuing the
/// forecast `horizon` days earlier.
pub fn predict_days(
    models: &BTreeMap<VarId, TargetModel>,
    net: &GrangerNet,
    set: &StreamSet,
    horizon: u32,
    pred_days: &[usize],
) -> Result<Predictions> {
    let h = horizon as usize;
    if let Some(&d) = pred_days.iter().find(|&&d| d < h || d >= set.total_len()) {
        return Err(Error::InvalidParam(format!("prediction day {d} cannot be issued {h} days earlier")));
    }
    if let Some(m) = models.values().find(|m| m.horizon != horizon) {
        return Err(Error::InvalidParam(format!(
            "model for {} was fitted for horizon {}, not {horizon}",
            m.target, m.horizon
        )));
    }
    let codes = SourceCodes::new(set, net.depth);
    let issue: Vec<usize> = pred_days.iter().map(|&d| d - h).collect();
    let vars = set.vars();
    let per_var: Vec<(Vec<PredictionRecord>, bool)> = vars
        .par_iter()
        .map(|&v| {
            let (model, fallback) = match models.get(&v) {
                Some(m) => (m.clone(), false),
                None => {
                    let rate = set.training_rate(v).expect("listed var");
                    (TargetModel::marginal(v, horizon, rate, Default::default()), true)
                }
            };
            let scores = model.scores_at(net, &codes, &issue)?;
            let recs = pred_days
                .iter()
                .zip(&issue)
                .zip(scores)
                .map(|((&d, &t), s)| PredictionRecord {
                    var: v,
                    issue_day: t,
                    pred_day: d,
                    score: s,
                    decision: model.decide(s),
                    fallback,
                })
                .collect();
            Ok((recs, fallback))
        })
        .collect::<Result<_>>()?;
    let n_fallback_vars = per_var.iter().filter(|p| p.1).count();
    if n_fallback_vars > 0 {
        log::warn!("{n_fallback_vars} variables have no fitted model; using their training rate");
    }
    Ok(Predictions {
        records: per_var.into_iter().flat_map(|p| p.0).collect(),
        n_fallback_vars,
    })
}

/// One record per (tile, class, holdout day).
pub fn predict_holdout(
    models: &BTreeMap<VarId, TargetModel>,
    net: &GrangerNet,
    set: &StreamSet,
    horizon: u32,
) -> Result<Predictions> {
    let days: Vec<usize> = (set.train_len()..set.total_len()).collect();
    predict_days(models, net, set, horizon, &days)
}

/// Days around the prediction date that count as a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HitWindow {
    pub before: usize,
    pub after: usize,
}

impl Default for HitWindow {
    fn default() -> Self {
        HitWindow { before: 1, after: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledRecord {
    pub record: PredictionRecord,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Labeled {
    pub records: Vec<LabeledRecord>,
    /// Records whose window runs off either end of the data.
    pub dropped: usize,
}

/// Positive iff the variable fires anywhere in `[pred_day - before, pred_day + after]`.
pub fn hit_match(records: &[PredictionRecord], truth: &StreamSet, window: HitWindow) -> Result<Labeled> {
    let mut out = Labeled::default();
    for r in records {
        let stream = truth.get(r.var).ok_or_else(|| Error::UnknownVariable(r.var.to_string()))?;
        let v = stream.values();
        if r.pred_day < window.before || r.pred_day + window.after >= v.len() {
            out.dropped += 1;
            continue;
        }
        let label = v[r.pred_day - window.before..=r.pred_day + window.after].iter().any(|&b| b);
        out.records.push(LabeledRecord { record: *r, label });
    }
    if out.dropped > 0 {
        log::info!("{} records dropped: hit window past the end of data", out.dropped);
    }
    Ok(out)
}

/// Grouping used when summarising AUCs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AucGroup {
    TileClass(TileId, EventClass),
    /// Both classes of a tile pooled before scoring.
    Tile(TileId),
    Class(EventClass),
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub group: AucGroup,
    pub n_pos: usize,
    pub n_neg: usize,
    /// `None` when only one label is present.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AucTable {
    pub rows: Vec<AucRow>,
    /// Groups without both labels.
    pub excluded: usize,
}

impl AucTable {
    pub fn get(&self, group: AucGroup) -> Option<&AucRow> {
        self.rows.iter().find(|r| r.group == group)
    }

    /// Defined AUCs of one grouping kind.
    pub fn values<F: Fn(&AucGroup) -> bool>(&self, pick: F) -> Vec<f64> {
        self.rows.iter().filter(|r| pick(&r.group)).filter_map(|r| r.auc).collect()
    }

    /// Mean over tiles of the per-tile mean of class AUCs.
    pub fn class_averaged_tile_auc(&self) -> BTreeMap<TileId, f64> {
        let mut acc: BTreeMap<TileId, (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            if let (AucGroup::TileClass(t, _), Some(a)) = (r.group, r.auc) {
                let e = acc.entry(t).or_default();
                e.0 += a;
                e.1 += 1;
            }
        }
        acc.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect()
    }
}

/// AUC per (tile, class), per tile with classes pooled, per class and overall.
pub fn auc_table(labeled: &[LabeledRecord]) -> AucTable {
    let mut groups: BTreeMap<AucGroup, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for l in labeled {
        let v = l.record.var;
        for g in [AucGroup::TileClass(v.tile, v.class), AucGroup::Tile(v.tile), AucGroup::Class(v.class), AucGroup::All] {
            let e = groups.entry(g).or_default();
            e.0.push(l.record.score);
            e.1.push(l.label);
        }
    }
    let rows: Vec<AucRow> = groups
        .into_par_iter()
        .map(|(group, (s, y))| {
            let n_pos = y.iter().filter(|&&b| b).count();
            AucRow {
                group,
                n_pos,
                n_neg: y.len() - n_pos,
                auc: roc_auc(&s, &y).ok(),
            }
        })
        .collect();
    let excluded = rows.iter().filter(|r| r.auc.is_none()).count();
    if excluded > 0 {
        log::info!("{excluded} AUC groups excluded: single-class labels");
    }
    AucTable { rows, excluded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn rec(var: VarId, day: usize, score: f64) -> PredictionRecord {
        PredictionRecord {
            var,
            issue_day: day - 7,
            pred_day: day,
            score,
            decision: score >= 0.5,
            fallback: false,
        }
    }

    #[test]
    fn hit_window_hand_enumeration() {
        // truth fires on days 10, 13 and 19 of a 20-day calendar
        let mut v = vec![false; 20];
        for d in [10, 13, 19] {
            v[d] = true;
        }
        let set = synth::set_from_columns(vec![v, vec![false; 20]], 12);
        let a = synth::var_of(0);
        let days = [8, 9, 10, 11, 12, 14, 15, 16, 18, 19];
        let records: Vec<_> = days.iter().map(|&d| rec(a, d, 0.5)).collect();
        let lab = hit_match(&records, &set, HitWindow::default()).unwrap();
        // day 19 needs day 20, which does not exist
        assert_eq!(lab.dropped, 1);
        let got: Vec<(usize, bool)> = lab.records.iter().map(|l| (l.record.pred_day, l.label)).collect();
        assert_eq!(
            got,
            vec![(8, false), (9, true), (10, true), (11, true), (12, true), (14, true), (15, false), (16, false), (18, true)]
        );
        // exact-day window
        let lab = hit_match(&records, &set, HitWindow { before: 0, after: 0 }).unwrap();
        assert_eq!(lab.dropped, 0);
        let pos: Vec<usize> = lab.records.iter().filter(|l| l.label).map(|l| l.record.pred_day).collect();
        assert_eq!(pos, vec![10, 19]);
    }

    #[test]
    fn two_days_after_is_a_miss() {
        let mut v = vec![false; 30];
        v[17] = true;
        let set = synth::set_from_columns(vec![v, vec![false; 30]], 20);
        let lab = hit_match(&[rec(synth::var_of(0), 15, 0.1), rec(synth::var_of(0), 17, 0.1)], &set, HitWindow::default()).unwrap();
        assert!(!lab.records[0].label);
        assert!(lab.records[1].label);
    }

    #[test]
    fn table_groups_and_exclusions() {
        let a = VarId::new(0, EventClass::Violent);
        let b = VarId::new(0, EventClass::Property);
        let c = VarId::new(1, EventClass::Violent);
        let mk = |var, day, score, label| LabeledRecord { record: rec(var, day, score), label };
        let labeled = vec![
            mk(a, 10, 0.9, true),
            mk(a, 11, 0.2, false),
            mk(b, 10, 0.6, true),
            mk(b, 11, 0.7, false),
            mk(c, 10, 0.3, false),
            mk(c, 11, 0.4, false),
        ];
        let t = auc_table(&labeled);
        assert_eq!(t.get(AucGroup::TileClass(TileId(0), EventClass::Violent)).unwrap().auc, Some(1.0));
        assert_eq!(t.get(AucGroup::TileClass(TileId(0), EventClass::Property)).unwrap().auc, Some(0.0));
        assert_eq!(t.get(AucGroup::TileClass(TileId(1), EventClass::Violent)).unwrap().auc, None);
        assert_eq!(t.get(AucGroup::Tile(TileId(1))).unwrap().auc, None);
        assert_eq!(t.excluded, 2);
        // tile 0 pooled: pos {0.9, 0.6}, neg {0.2, 0.7} -> 3 of 4 pairs
        assert_eq!(t.get(AucGroup::Tile(TileId(0))).unwrap().auc, Some(0.75));
        assert_eq!(t.class_averaged_tile_auc()[&TileId(0)], 0.5);
        assert!(t.get(AucGroup::All).unwrap().auc.is_some());
    }
}
