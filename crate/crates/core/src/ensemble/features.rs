//! Feature assembly for one target at one forecast horizon.
//!
//! A forecast issued at day `t` for day `t + horizon` can use every in-edge
//! whose delay `k` is at least the horizon: the machine maps the source
//! history ending at `t - (k - horizon)` to the target at `t + horizon`, so
//! no input is later than the issue day.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::GrangerNet;
use crate::quantize::{StreamSet, VarId};
use crate::xpfsa::{HistoryCodes, Xpfsa};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub source: VarId,
    pub delay: u32,
}

/// Ordered feature columns of a target model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub target: VarId,
    pub horizon: u32,
    pub depth: usize,
    pub columns: Vec<ColumnSpec>,
}

impl Catalog {
    /// The top `cap` in-edges (by gamma) usable at `horizon`.
    pub fn select(net: &GrangerNet, target: VarId, horizon: u32, cap: usize) -> Result<Catalog> {
        if horizon > net.max_delay {
            return Err(Error::InvalidParam(format!(
                "horizon {horizon} exceeds the swept maximum delay {}",
                net.max_delay
            )));
        }
        let columns: Vec<ColumnSpec> = net
            .in_edges(target)?
            .iter()
            .filter(|e| e.key.delay >= horizon)
            .take(cap)
            .map(|e| ColumnSpec {
                source: e.key.source,
                delay: e.key.delay,
            })
            .collect();
        if columns.is_empty() {
            return Err(Error::NoInEdges(target.to_string()));
        }
        Ok(Catalog {
            target,
            horizon,
            depth: net.depth,
            columns,
        })
    }

    pub fn offset(&self, c: &ColumnSpec) -> usize {
        (c.delay - self.horizon) as usize
    }

    /// Earliest issue day whose every source history is complete.
    pub fn first_row(&self) -> usize {
        self.depth + self.columns.iter().map(|c| self.offset(c)).max().unwrap_or(0)
    }

    /// Machines of the catalog looked up in `net`.
    pub fn bind<'a>(&self, net: &'a GrangerNet) -> Result<Vec<&'a Xpfsa>> {
        let edges = net.in_edges(self.target)?;
        self.columns
            .iter()
            .map(|c| {
                edges
                    .iter()
                    .find(|e| e.key.source == c.source && e.key.delay == c.delay)
                    .map(|e| &e.machine)
                    .ok_or_else(|| {
                        Error::UnknownVariable(format!("edge {} -> {} at delay {}", c.source, self.target, c.delay))
                    })
            })
            .collect()
    }
}

/// History codes of every source a catalog reads, over the full calendar.
pub struct SourceCodes {
    depth: usize,
    codes: BTreeMap<VarId, HistoryCodes>,
}

impl SourceCodes {
    pub fn new(set: &StreamSet, depth: usize) -> Self {
        SourceCodes {
            depth,
            codes: BTreeMap::new(),
        }
        .with_set(set)
    }

    fn with_set(mut self, set: &StreamSet) -> Self {
        for s in set.streams() {
            self.codes.insert(s.var, HistoryCodes::new(s.values(), self.depth));
        }
        self
    }

    /// Codes for just the given sources.
    pub fn for_sources<'a>(set: &StreamSet, depth: usize, sources: impl IntoIterator<Item = &'a VarId>) -> Result<Self> {
        let mut codes = BTreeMap::new();
        for &v in sources {
            if codes.contains_key(&v) {
                continue;
            }
            let s = set.get(v).ok_or_else(|| Error::UnknownVariable(v.to_string()))?;
            codes.insert(v, HistoryCodes::new(s.values(), depth));
        }
        Ok(SourceCodes { depth, codes })
    }

    pub fn get(&self, v: VarId) -> Result<&HistoryCodes> {
        self.codes.get(&v).ok_or_else(|| Error::UnknownVariable(v.to_string()))
    }
}

/// Column-major features with labels `target[t + horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub catalog: Catalog,
    /// Issue day of each row.
    pub times: Vec<usize>,
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.times.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Rows `range` as a new matrix.
    pub fn slice(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            catalog: self.catalog.clone(),
            times: self.times[range.clone()].to_vec(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
            labels: self.labels[range].to_vec(),
        }
    }
}

/// Feature columns at the given issue days.
pub fn feature_columns(catalog: &Catalog, machines: &[&Xpfsa], codes: &SourceCodes, times: &[usize]) -> Result<Vec<Vec<f64>>> {
    let first = catalog.first_row();
    if let Some(&t) = times.iter().find(|&&t| t < first) {
        return Err(Error::InsufficientData(format!("issue day {t} precedes the first complete history at {first}")));
    }
    catalog
        .columns
        .iter()
        .zip(machines)
        .map(|(c, m)| {
            let h = codes.get(c.source)?;
            let j = catalog.offset(c);
            times
                .iter()
                .map(|&t| {
                    h.codes
                        .get(t - j)
                        .map(|&code| m.evaluate_code(code))
                        .ok_or_else(|| Error::InsufficientData(format!("issue day {t} is past the calendar")))
                })
                .collect()
        })
        .collect()
}

/// Training matrix: every issue day `t >= first_row` whose label day
/// `t + horizon` is still a training day.
pub fn build_features(net: &GrangerNet, set: &StreamSet, target: VarId, horizon: u32, cap: usize) -> Result<FeatureMatrix> {
    let catalog = Catalog::select(net, target, horizon, cap)?;
    let machines = catalog.bind(net)?;
    let codes = SourceCodes::for_sources(set, catalog.depth, catalog.columns.iter().map(|c| &c.source))?;
    let train = set.training(target).ok_or_else(|| Error::UnknownVariable(target.to_string()))?;
    let first = catalog.first_row();
    let h = horizon as usize;
    let times: Vec<usize> = (first..train.len().saturating_sub(h)).collect();
    if times.is_empty() {
        return Err(Error::InsufficientData(format!("no complete training rows for {target}")));
    }
    let columns = feature_columns(&catalog, &machines, &codes, &times)?;
    let labels = times.iter().map(|&t| train[t + h]).collect();
    Ok(FeatureMatrix {
        catalog,
        times,
        columns,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{sweep, SweepParams};
    use crate::synth;
    use crate::xpfsa::XpfsaParams;

    fn planted() -> (StreamSet, GrangerNet) {
        let spec = synth::PlantedSpec {
            n_vars: 4,
            couplings: vec![
                synth::Coupling { source: 0, target: 3, lag: 2, flip: 0.1 },
            ],
            len: 1500,
            ..Default::default()
        };
        let mut cols = synth::planted_columns(&spec, 17);
        // second planted source for the same target: OR in var 1 at lag 4
        for t in (4..cols[3].len()).rev() {
            cols[3][t] = cols[3][t] || (cols[1][t - 4] && t % 2 == 0);
        }
        let set = synth::set_from_columns(cols, spec.len);
        let params = SweepParams {
            max_delay: 5,
            xpfsa: XpfsaParams { depth: 3, ..Default::default() },
            gamma_min: 0.02,
            ..Default::default()
        };
        let net = sweep(&set, &params).unwrap();
        (set, net)
    }

    #[test]
    fn cells_match_direct_machine_evaluation() {
        let (set, net) = planted();
        let target = synth::var_of(3);
        let fm = build_features(&net, &set, target, 1, 500).unwrap();
        let sources: std::collections::BTreeSet<_> = fm.catalog.columns.iter().map(|c| c.source).collect();
        assert!(sources.contains(&synth::var_of(0)) && sources.contains(&synth::var_of(1)), "{sources:?}");
        let machines = fm.catalog.bind(&net).unwrap();
        let depth = fm.catalog.depth;
        for (ci, c) in fm.catalog.columns.iter().enumerate() {
            assert!(c.delay >= 1);
            let src = set.get(c.source).unwrap().values();
            let j = (c.delay - 1) as usize;
            for (ri, &t) in fm.times.iter().enumerate() {
                // history ending at t - j, oldest first
                let end = t - j;
                let hist = &src[end + 1 - depth..=end];
                assert_eq!(fm.columns[ci][ri], machines[ci].evaluate(hist), "col {ci} row {t}");
            }
        }
        let label = set.training(target).unwrap();
        for (ri, &t) in fm.times.iter().enumerate() {
            assert_eq!(fm.labels[ri], label[t + 1]);
        }
        assert_eq!(fm.times[0], fm.catalog.first_row());
        assert_eq!(*fm.times.last().unwrap(), set.train_len() - 2);
        assert!(fm.columns.iter().flatten().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn single_self_edge_column() {
        // a period-3 pulse predicts itself three days ahead
        let v: Vec<bool> = (0..400).map(|t| t % 3 == 0).collect();
        let set = synth::set_from_columns(vec![v.clone(), vec![false; 400]], 360);
        let net = sweep(
            &set,
            &SweepParams { max_delay: 3, xpfsa: XpfsaParams { depth: 2, ..Default::default() }, gamma_min: 0.5, ..Default::default() },
        )
        .unwrap();
        let target = synth::var_of(0);
        let fm = build_features(&net, &set, target, 3, 500).unwrap();
        assert_eq!(fm.catalog.columns, vec![ColumnSpec { source: target, delay: 3 }]);
        let m = fm.catalog.bind(&net).unwrap()[0];
        for (ri, &t) in fm.times.iter().enumerate() {
            assert_eq!(fm.columns[0][ri], m.evaluate(&v[..=t]));
            assert_eq!(fm.columns[0][ri], v[t + 3] as u8 as f64);
        }
        // rows start once the depth-2 history is complete
        assert_eq!(fm.times[0], 2);
    }

    #[test]
    fn no_edges_means_marginal_fallback() {
        let (set, net) = planted();
        // var 2 is free: nothing predicts it
        let err = build_features(&net, &set, synth::var_of(2), 1, 500).unwrap_err();
        assert!(matches!(err, Error::NoInEdges(_)));
        assert!(build_features(&net, &set, synth::var_of(3), 9, 500).is_err());
    }

    #[test]
    fn cap_keeps_the_strongest() {
        let (set, net) = planted();
        let t = synth::var_of(3);
        let all = build_features(&net, &set, t, 0, 500).unwrap();
        let top = build_features(&net, &set, t, 0, 2).unwrap();
        assert_eq!(top.catalog.columns.len(), 2);
        assert_eq!(&all.catalog.columns[..2], &top.catalog.columns[..]);
        let g: Vec<f64> = net.in_edges(t).unwrap().iter().map(|e| e.gamma()).collect();
        assert!(g.windows(2).all(|w| w[0] >= w[1]));
    }
}
