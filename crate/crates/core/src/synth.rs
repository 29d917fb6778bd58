//! Seeded generators with known ground truth, for tests and fixtures.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{EventClass, RawEvent, SesRecord};
use crate::quantize::{Bounds, EventStream, StreamSet, TileGrid, TimeWindow, VarId, CHICAGO_CELL};

/// `target[t] = source[t - lag]`, flipped with probability `flip`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub source: usize,
    pub target: usize,
    pub lag: usize,
    pub flip: f64,
}

/// Variables are laid out two classes per tile along one grid row:
/// variable `i` is tile `i / 2`, class violent for even `i`, property for odd.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n_vars: usize,
    pub couplings: Vec<Coupling>,
    /// Training days.
    pub len: usize,
    pub holdout: usize,
    /// Rate of the free (uncoupled) variables.
    pub base_rate: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_vars: 10,
            couplings: (0..5)
                .map(|i| Coupling {
                    source: i,
                    target: i + 5,
                    lag: 1 + i,
                    flip: 0.1,
                })
                .collect(),
            len: 2000,
            holdout: 60,
            base_rate: 0.5,
        }
    }
}

pub const CLASSES: [EventClass; 2] = [EventClass::Violent, EventClass::Property];

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date")
}

/// One-row grid with square-ish 0.01 degree tiles near Chicago.
pub fn row_grid(n_tiles: usize) -> TileGrid {
    TileGrid {
        origin_lat: 41.8,
        origin_lon: -87.7,
        cell_height: 0.01,
        cell_width: 0.01,
        rows: 1,
        cols: n_tiles as u32,
    }
}

pub fn window(train: usize, holdout: usize) -> TimeWindow {
    let s = start_date();
    TimeWindow::new(
        s,
        s + chrono::Days::new(train as u64),
        s + chrono::Days::new((train + holdout - 1) as u64),
    )
    .expect("non-empty window")
}

pub fn var_of(i: usize) -> VarId {
    VarId::new((i / 2) as u32, CLASSES[i % 2])
}

pub fn set_from_columns(columns: Vec<Vec<bool>>, train: usize) -> StreamSet {
    let total = columns[0].len();
    let grid = row_grid(columns.len().div_ceil(2));
    let streams = columns.into_iter().enumerate().map(|(i, v)| EventStream::new(var_of(i), v));
    StreamSet::from_streams(grid, window(train, total - train), CLASSES.to_vec(), streams).expect("consistent set")
}

/// Free variables are iid; coupled targets copy their source. Variables are
/// generated in index order, so a coupling's source must precede its target.
pub fn planted_columns(spec: &PlantedSpec, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = spec.len + spec.holdout;
    let mut cols: Vec<Vec<bool>> = Vec::with_capacity(spec.n_vars);
    for i in 0..spec.n_vars {
        let c = spec.couplings.iter().find(|c| c.target == i);
        let v = match c {
            Some(c) => {
                assert!(c.source < i, "coupling source must precede its target");
                (0..total)
                    .map(|t| {
                        if t >= c.lag {
                            cols[c.source][t - c.lag] ^ rng.random_bool(c.flip)
                        } else {
                            rng.random_bool(spec.base_rate)
                        }
                    })
                    .collect()
            }
            None => (0..total).map(|_| rng.random_bool(spec.base_rate)).collect(),
        };
        cols.push(v);
    }
    cols
}

pub fn planted_set(spec: &PlantedSpec, seed: u64) -> StreamSet {
    set_from_columns(planted_columns(spec, seed), spec.len)
}

/// Independent variables with their own period-`period` dynamics: the
/// variable fires with probability `hi` on days `t % period == phase` and
/// `lo` otherwise, phases staggered by index.
pub fn periodic_columns(n_vars: usize, total: usize, period: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_vars)
        .map(|i| {
            (0..total)
                .map(|t| rng.random_bool(if t % period == i % period { hi } else { lo }))
                .collect()
        })
        .collect()
}

/// Independent variables that each excite themselves: fires with
/// probability `hi` if it fired `lag` days earlier, `lo` otherwise.
pub fn self_exciting_columns(n_vars: usize, total: usize, lag: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_vars)
        .map(|_| {
            let mut v = vec![false; total];
            for t in 0..total {
                let p = if t >= lag && v[t - lag] { hi } else { lo };
                v[t] = rng.random_bool(p);
            }
            v
        })
        .collect()
}

/// Two classes per tile that suppress each other: each fires with
/// probability `lo` if the other class of its tile fired `lag` days earlier,
/// `hi` otherwise.
pub fn suppressive_columns(n_tiles: usize, total: usize, lag: usize, hi: f64, lo: f64, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![vec![false; total]; 2 * n_tiles];
    for t in 0..total {
        for tile in 0..n_tiles {
            for c in 0..2 {
                let other = 2 * tile + 1 - c;
                let p = if t >= lag && cols[other][t - lag] { lo } else { hi };
                cols[2 * tile + c][t] = rng.random_bool(p);
            }
        }
    }
    cols
}

/// A small city-like fixture: a `rows x cols` block of Chicago-sized tiles
/// with neighbour excitation, cross-class suppression at one week, and
/// arrest probabilities that rise with each column's hardship.
#[derive(Debug, Clone, PartialEq)]
pub struct CityFixture {
    pub bounds: Bounds,
    pub events: Vec<RawEvent>,
    /// One region per grid column.
    pub ses: Vec<SesRecord>,
    pub regions: serde_json::Value,
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn city_fixture(rows: u32, cols: u32, train_start: NaiveDate, days: usize, seed: u64) -> CityFixture {
    let (ch, cw) = CHICAGO_CELL;
    let bounds = Bounds {
        south: 41.85,
        west: -87.70,
        north: 41.85 + rows as f64 * ch,
        east: -87.70 + cols as f64 * cw,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (rows * cols) as usize;
    let base_v: Vec<f64> = (0..n).map(|_| rng.random_range(0.04..0.12)).collect();
    let base_u: Vec<f64> = (0..n).map(|_| rng.random_range(0.10..0.22)).collect();
    let hardship: Vec<f64> = (0..cols).map(|c| round6(10.0 + 80.0 * c as f64 / (cols - 1).max(1) as f64 + rng.random_range(-5.0..5.0))).collect();
    let ses: Vec<SesRecord> = (0..cols as usize)
        .map(|c| {
            let h = hardship[c];
            SesRecord {
                region_id: format!("CA{:02}", c + 1),
                crowded_pct: round6((1.0 + 0.08 * h + rng.random_range(-1.0..1.0)).clamp(0.0, 100.0)),
                poverty_pct: round6((5.0 + 0.35 * h + rng.random_range(-4.0..4.0)).clamp(0.0, 100.0)),
                unemployed_pct: round6((4.0 + 0.2 * h + rng.random_range(-3.0..3.0)).clamp(0.0, 100.0)),
                income_pc: round6((60000.0 - 450.0 * h + rng.random_range(-4000.0..4000.0)).max(0.0)),
                hardship: h,
            }
        })
        .collect();
    let features: Vec<serde_json::Value> = (0..cols)
        .map(|c| {
            let w = bounds.west + c as f64 * cw;
            let e = w + cw;
            let ring = [[w, bounds.south], [e, bounds.south], [e, bounds.north], [w, bounds.north], [w, bounds.south]];
            serde_json::json!({
                "type": "Feature",
                "properties": { "region_id": format!("CA{:02}", c + 1) },
                "geometry": { "type": "Polygon", "coordinates": [ring] }
            })
        })
        .collect();
    let regions = serde_json::json!({ "type": "FeatureCollection", "features": features });

    let lag = 7;
    let mut v = vec![vec![false; days]; n];
    let mut u = vec![vec![false; days]; n];
    let mut events = Vec::new();
    let violent = ["BATTERY", "ASSAULT"];
    let property = ["THEFT", "BURGLARY"];
    for t in 0..days {
        let date = train_start + chrono::Days::new(t as u64);
        for i in 0..n {
            let (r, c) = ((i as u32) / cols, (i as u32) % cols);
            let back = |x: &Vec<Vec<bool>>, j: usize| t >= lag && x[j][t - lag];
            let nbr = [(r > 0).then(|| i - cols as usize), (r + 1 < rows).then(|| i + cols as usize), (c > 0).then(|| i - 1), (c + 1 < cols).then(|| i + 1)]
                .into_iter()
                .flatten()
                .any(|j| back(&v, j));
            let pv = base_v[i] * if nbr { 2.5 } else { 1.0 } * if back(&u, i) { 0.5 } else { 1.0 };
            let pu = base_u[i] * if back(&v, i) { 0.5 } else { 1.0 } * if back(&u, i) { 1.8 } else { 1.0 };
            v[i][t] = rng.random_bool(pv.min(0.95));
            u[i][t] = rng.random_bool(pu.min(0.95));
            let q = 0.15 + 0.6 * hardship[c as usize] / 100.0;
            for (fired, cats) in [(v[i][t], &violent), (u[i][t], &property)] {
                if !fired {
                    continue;
                }
                let k = if rng.random_bool(0.2) { 2 } else { 1 };
                for _ in 0..k {
                    events.push(RawEvent {
                        date,
                        latitude: round6(bounds.south + (r as f64 + rng.random_range(0.05..0.95)) * ch),
                        longitude: round6(bounds.west + (c as f64 + rng.random_range(0.05..0.95)) * cw),
                        category: cats[rng.random_range(0..2)].to_string(),
                        count: if rng.random_bool(q) { rng.random_range(1..3) } else { 0 },
                    });
                }
            }
            if rng.random_bool(0.05) {
                events.push(RawEvent {
                    date,
                    latitude: round6(bounds.south + (r as f64 + 0.5) * ch),
                    longitude: round6(bounds.west + (c as f64 + 0.5) * cw),
                    category: "NARCOTICS".to_string(),
                    count: 1,
                });
            }
        }
    }
    CityFixture {
        bounds,
        events,
        ses,
        regions,
    }
}

pub fn write_ses_csv<W: std::io::Write>(writer: W, ses: &[SesRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in ses {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
