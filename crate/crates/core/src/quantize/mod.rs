//! Space-time quantization: tiles × 1-day steps × event class → Boolean streams.

mod entropy;
mod grid;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ClassifiedEvent, EventClass};

pub use entropy::entropy_rate;
pub use grid::{build_grid, Bounds, TileGrid, TileId, CHICAGO_CELL, TERROR_CELL};
pub use store::{read_stream_set, write_stream_csv, write_stream_set};

/// One modeled variable: a tile together with an event class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId {
    pub tile: TileId,
    pub class: EventClass,
}

impl VarId {
    pub fn new(tile: u32, class: EventClass) -> Self {
        VarId {
            tile: TileId(tile),
            class,
        }
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.tile, self.class)
    }
}

/// Boolean daily series over the full calendar of its `StreamSet`
/// (training days followed by holdout days).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub var: VarId,
    values: Vec<bool>,
}

impl EventStream {
    pub fn new(var: VarId, values: Vec<bool>) -> Self {
        EventStream { var, values }
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [bool] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

/// Calendar split. Training covers `[train_start, holdout_start)`; holdout
/// covers `[holdout_start, holdout_end]`, so the boundary day is holdout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub train_start: NaiveDate,
    pub holdout_start: NaiveDate,
    pub holdout_end: NaiveDate,
}

impl TimeWindow {
    pub fn new(train_start: NaiveDate, holdout_start: NaiveDate, holdout_end: NaiveDate) -> Result<Self> {
        if holdout_start <= train_start {
            return Err(Error::InvalidParam(format!(
                "training window is empty: {train_start} .. {holdout_start}"
            )));
        }
        if holdout_end < holdout_start {
            return Err(Error::InvalidParam(format!(
                "holdout window is empty: {holdout_start} ..= {holdout_end}"
            )));
        }
        Ok(TimeWindow {
            train_start,
            holdout_start,
            holdout_end,
        })
    }

    pub fn train_len(&self) -> usize {
        (self.holdout_start - self.train_start).num_days() as usize
    }

    pub fn holdout_len(&self) -> usize {
        (self.holdout_end - self.holdout_start).num_days() as usize + 1
    }

    pub fn total_len(&self) -> usize {
        self.train_len() + self.holdout_len()
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        if date < self.train_start || date > self.holdout_end {
            return None;
        }
        Some((date - self.train_start).num_days() as usize)
    }

    pub fn date_of(&self, index: usize) -> NaiveDate {
        self.train_start + chrono::Days::new(index as u64)
    }
}

/// Aligned streams for every (tile, class) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSet {
    pub grid: TileGrid,
    pub window: TimeWindow,
    pub classes: Vec<EventClass>,
    streams: BTreeMap<VarId, EventStream>,
}

impl StreamSet {
    pub fn from_streams(
        grid: TileGrid,
        window: TimeWindow,
        classes: Vec<EventClass>,
        streams: impl IntoIterator<Item = EventStream>,
    ) -> Result<Self> {
        let total = window.total_len();
        let mut map = BTreeMap::new();
        for s in streams {
            if s.len() != total {
                return Err(Error::InvalidParam(format!(
                    "stream {} has length {}, calendar has {total} days",
                    s.var,
                    s.len()
                )));
            }
            if !classes.contains(&s.var.class) {
                return Err(Error::InvalidParam(format!("stream {} has an undeclared class", s.var)));
            }
            if s.var.tile.0 >= grid.n_tiles() {
                return Err(Error::InvalidParam(format!("stream {} is off the grid", s.var)));
            }
            map.insert(s.var, s);
        }
        Ok(StreamSet {
            grid,
            window,
            classes,
            streams: map,
        })
    }

    pub fn train_len(&self) -> usize {
        self.window.train_len()
    }

    pub fn holdout_len(&self) -> usize {
        self.window.holdout_len()
    }

    pub fn total_len(&self) -> usize {
        self.window.total_len()
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    /// Variables in canonical (tile, class) order.
    pub fn vars(&self) -> Vec<VarId> {
        self.streams.keys().copied().collect()
    }

    pub fn tiles(&self) -> BTreeSet<TileId> {
        self.streams.keys().map(|v| v.tile).collect()
    }

    pub fn get(&self, var: VarId) -> Option<&EventStream> {
        self.streams.get(&var)
    }

    pub fn get_mut(&mut self, var: VarId) -> Option<&mut EventStream> {
        self.streams.get_mut(&var)
    }

    pub fn streams(&self) -> impl Iterator<Item = &EventStream> {
        self.streams.values()
    }

    pub fn training(&self, var: VarId) -> Option<&[bool]> {
        let m = self.train_len();
        self.get(var).map(|s| &s.values()[..m])
    }

    /// Fraction of training days that carry a 1.
    pub fn training_rate(&self, var: VarId) -> Option<f64> {
        self.training(var)
            .map(|v| v.iter().filter(|&&b| b).count() as f64 / v.len() as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterReport {
    pub outside_grid: usize,
    pub outside_window: usize,
    pub undeclared_class: usize,
}

/// Collapse events onto (tile, class, day) cells; a cell is 1 iff at least one
/// event landed in it. Every tile gets a stream for every class, zeros included.
///
/// Rows of the grid are independent, so the work is split by tile with rayon.
pub fn rasterize(
    events: &[ClassifiedEvent],
    grid: &TileGrid,
    classes: &[EventClass],
    window: TimeWindow,
) -> Result<(StreamSet, RasterReport)> {
    use rayon::prelude::*;

    let total = window.total_len();
    let mut report = RasterReport::default();
    let class_index: BTreeMap<EventClass, usize> =
        classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    // bucket (tile) -> list of (class idx, day)
    let mut by_tile: Vec<Vec<(usize, usize)>> = vec![Vec::new(); grid.n_tiles() as usize];
    for ev in events {
        let Some(&ci) = class_index.get(&ev.class) else {
            report.undeclared_class += 1;
            continue;
        };
        let Some(day) = window.day_index(ev.date) else {
            report.outside_window += 1;
            continue;
        };
        let Some(tile) = grid.tile_of(ev.latitude, ev.longitude) else {
            report.outside_grid += 1;
            continue;
        };
        by_tile[tile.0 as usize].push((ci, day));
    }

    let streams: Vec<EventStream> = by_tile
        .into_par_iter()
        .enumerate()
        .flat_map_iter(|(tile, hits)| {
            let mut rows = vec![vec![false; total]; classes.len()];
            for (ci, day) in hits {
                rows[ci][day] = true;
            }
            rows.into_iter()
                .zip(classes.iter())
                .map(move |(values, &class)| EventStream::new(VarId::new(tile as u32, class), values))
        })
        .collect();

    let set = StreamSet::from_streams(*grid, window, classes.to_vec(), streams)?;
    Ok((set, report))
}

/// Keep tiles whose incident-class union is active on at least
/// `min_event_fraction` of training days; drop every class of the rest.
pub fn prune_sparse(set: &StreamSet, min_event_fraction: f64) -> Result<StreamSet> {
    if !(min_event_fraction > 0.0 && min_event_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "min_event_fraction must lie in (0, 1), got {min_event_fraction}"
        )));
    }
    let m = set.train_len();
    let incident: Vec<EventClass> = set.classes.iter().copied().filter(|c| !c.is_count()).collect();
    let mut keep = BTreeSet::new();
    for tile in set.tiles() {
        let mut active = vec![false; m];
        for &c in &incident {
            if let Some(v) = set.training(VarId { tile, class: c }) {
                for (a, &b) in active.iter_mut().zip(v) {
                    *a |= b;
                }
            }
        }
        let days = active.iter().filter(|&&a| a).count();
        if days as f64 / m as f64 >= min_event_fraction {
            keep.insert(tile);
        }
    }
    if keep.is_empty() {
        return Err(Error::EverythingPruned {
            threshold: min_event_fraction,
        });
    }
    let streams = set
        .streams()
        .filter(|s| keep.contains(&s.var.tile))
        .cloned()
        .collect::<Vec<_>>();
    StreamSet::from_streams(set.grid, set.window, set.classes.clone(), streams)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn grid_3x1() -> TileGrid {
        build_grid(
            Bounds {
                south: 0.0,
                west: 0.0,
                north: 3.0,
                east: 1.0,
            },
            1.0,
            1.0,
        )
        .unwrap()
    }

    fn ev(date: NaiveDate, lat: f64, lon: f64, class: EventClass) -> ClassifiedEvent {
        ClassifiedEvent {
            date,
            latitude: lat,
            longitude: lon,
            class,
        }
    }

    #[test]
    fn boundary_day_belongs_to_holdout() {
        let w = TimeWindow::new(d(2017, 1, 1), d(2017, 1, 3), d(2017, 1, 4)).unwrap();
        assert_eq!((w.train_len(), w.holdout_len()), (2, 2));
        assert_eq!(w.day_index(d(2017, 1, 3)), Some(2));
        assert!(w.day_index(d(2017, 1, 3)).unwrap() >= w.train_len());
        assert_eq!(w.date_of(3), d(2017, 1, 4));
        assert!(TimeWindow::new(d(2017, 1, 3), d(2017, 1, 3), d(2017, 1, 4)).is_err());
    }

    #[test]
    fn hand_rasterization() {
        use EventClass::*;
        let g = grid_3x1();
        let w = TimeWindow::new(d(2017, 1, 1), d(2017, 1, 4), d(2017, 1, 4)).unwrap();
        let events = vec![
            ev(d(2017, 1, 1), 0.5, 0.5, Property),
            ev(d(2017, 1, 1), 0.6, 0.4, Property), // same tile and day as previous
            ev(d(2017, 1, 2), 1.5, 0.5, Violent),
            ev(d(2017, 1, 4), 2.5, 0.5, Property),
            ev(d(2017, 1, 3), 2.2, 0.1, Violent),
            ev(d(2017, 1, 3), 5.0, 0.5, Violent),  // off grid
            ev(d(2018, 1, 3), 0.5, 0.5, Violent),  // off calendar
        ];
        let (set, report) = rasterize(&events, &g, &[Violent, Property], w).unwrap();
        assert_eq!(report.outside_grid, 1);
        assert_eq!(report.outside_window, 1);
        assert_eq!(set.len(), 6);
        let row = |t: u32, c| set.get(VarId::new(t, c)).unwrap().values().to_vec();
        assert_eq!(row(0, Property), vec![true, false, false, false]);
        assert_eq!(row(0, Violent), vec![false; 4]);
        assert_eq!(row(1, Violent), vec![false, true, false, false]);
        assert_eq!(row(1, Property), vec![false; 4]);
        assert_eq!(row(2, Violent), vec![false, false, true, false]);
        assert_eq!(row(2, Property), vec![false, false, false, true]);
    }

    #[test]
    fn prune_boundary_uses_at_least() {
        use EventClass::*;
        let g = grid_3x1();
        let w = TimeWindow::new(d(2017, 1, 1), d(2017, 4, 11), d(2017, 4, 20)).unwrap();
        assert_eq!(w.train_len(), 100);
        let total = w.total_len();
        let mk = |tile, class, ones: &[usize]| {
            let mut v = vec![false; total];
            for &i in ones {
                v[i] = true;
            }
            EventStream::new(VarId::new(tile, class), v)
        };
        let streams = vec![
            // tile 0: 4 event days -> dropped
            mk(0, Violent, &[1, 2]),
            mk(0, Property, &[2, 3, 4]),
            mk(0, Arrests, &[10, 11, 12, 13, 14, 15]),
            // tile 1: 5 event days across two classes -> kept
            mk(1, Violent, &[1, 2, 3]),
            mk(1, Property, &[50, 60]),
            mk(1, Arrests, &[]),
            // tile 2: events only in the holdout -> dropped
            mk(2, Violent, &[100, 101, 102, 103, 104, 105]),
            mk(2, Property, &[]),
            mk(2, Arrests, &[]),
        ];
        let set = StreamSet::from_streams(g, w, vec![Violent, Property, Arrests], streams).unwrap();
        let pruned = prune_sparse(&set, 0.05).unwrap();
        assert_eq!(pruned.tiles().into_iter().collect::<Vec<_>>(), vec![TileId(1)]);
        assert_eq!(pruned.len(), 3);
        assert!(matches!(prune_sparse(&set, 0.5), Err(Error::EverythingPruned { .. })));
        assert!(prune_sparse(&set, 0.0).is_err());
        assert!(prune_sparse(&set, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn ones_never_exceed_events(evs in proptest::collection::vec((0u32..30, 0.0f64..3.0, 0usize..2), 0..60)) {
            use EventClass::*;
            let g = grid_3x1();
            let w = TimeWindow::new(d(2017, 1, 1), d(2017, 1, 21), d(2017, 1, 30)).unwrap();
            let classes = [Violent, Property];
            let events: Vec<_> = evs.iter().map(|&(day, lat, c)| {
                ev(w.date_of(day as usize), lat, 0.5, classes[c])
            }).collect();
            let (set, _) = rasterize(&events, &g, &classes, w).unwrap();
            for s in set.streams() {
                let n_events: BTreeSet<_> = events.iter()
                    .filter(|e| e.class == s.var.class && g.tile_of(e.latitude, e.longitude) == Some(s.var.tile))
                    .map(|e| e.date)
                    .collect();
                let raw = events.iter()
                    .filter(|e| e.class == s.var.class && g.tile_of(e.latitude, e.longitude) == Some(s.var.tile))
                    .count();
                proptest::prop_assert_eq!(s.ones(), n_events.len());
                proptest::prop_assert!(s.ones() <= raw);
            }
        }

        #[test]
        fn raising_threshold_never_adds_tiles(bits in proptest::collection::vec(proptest::bool::weighted(0.1), 300),
                                              a in 0.01f64..0.5, b in 0.01f64..0.5) {
            use EventClass::*;
            let g = grid_3x1();
            let w = TimeWindow::new(d(2017, 1, 1), d(2017, 2, 20), d(2017, 2, 19 + 1)).unwrap();
            let total = w.total_len();
            let streams: Vec<_> = (0..3u32).flat_map(|t| {
                let bits = &bits;
                [Violent, Property].into_iter().enumerate().map(move |(ci, c)| {
                    let off = (t as usize * 2 + ci) * total;
                    EventStream::new(VarId::new(t, c), bits[off % 300..].iter().chain(bits.iter()).take(total).copied().collect())
                })
            }).collect();
            let set = StreamSet::from_streams(g, w, vec![Violent, Property], streams).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let kept_lo = prune_sparse(&set, lo).map(|s| s.tiles()).unwrap_or_default();
            let kept_hi = prune_sparse(&set, hi).map(|s| s.tiles()).unwrap_or_default();
            proptest::prop_assert!(kept_hi.is_subset(&kept_lo));
        }
    }
}
