use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::{TileGrid, TileId};

/// Intensity at every tile centre for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMap {
    pub day: usize,
    pub sigma_km: f64,
    /// Row-major over the whole grid.
    pub intensity: Vec<f64>,
}

impl RiskMap {
    pub fn max(&self) -> f64 {
        self.intensity.iter().copied().fold(0.0, f64::max)
    }

    /// Tiles ordered by intensity, highest first, ties by tile index.
    pub fn ranking(&self) -> Vec<TileId> {
        let mut t: Vec<u32> = (0..self.intensity.len() as u32).collect();
        t.sort_by(|&a, &b| {
            self.intensity[b as usize]
                .total_cmp(&self.intensity[a as usize])
                .then(a.cmp(&b))
        });
        t.into_iter().map(TileId).collect()
    }
}

/// `sum_c exp(-d^2 / (2 sigma^2))` over predicted tile centres `c`, with
/// distances in the grid's local projection, scaled to a maximum of 1.
/// A day with no predictions gives the zero map.
pub fn risk_map(day: usize, predicted: &[TileId], grid: &TileGrid, sigma_km: f64) -> Result<RiskMap> {
    if !(sigma_km > 0.0 && sigma_km.is_finite()) {
        return Err(Error::InvalidParam(format!("kernel width must be positive, got {sigma_km}")));
    }
    let proj = grid.projection();
    let xy = |t: TileId| {
        let (lat, lon) = grid.center(t);
        proj.project(lat, lon)
    };
    let centres: Vec<(f64, f64)> = predicted.iter().map(|&t| xy(t)).collect();
    let inv = 1.0 / (2.0 * sigma_km * sigma_km);
    let mut intensity: Vec<f64> = (0..grid.n_tiles())
        .map(|t| {
            let (x, y) = xy(TileId(t));
            centres
                .iter()
                .map(|&(cx, cy)| (-((x - cx).powi(2) + (y - cy).powi(2)) * inv).exp())
                .sum()
        })
        .collect();
    let max = intensity.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut intensity {
            *v /= max;
        }
    }
    Ok(RiskMap {
        day,
        sigma_km,
        intensity,
    })
}

/// Kernel widths tried when tuning: half a tile width to eight tile widths
/// in nine log-spaced steps.
pub fn sigma_grid(grid: &TileGrid) -> Vec<f64> {
    let w = grid.tile_width_km();
    (0..9).map(|i| w * 0.5 * 2f64.powf(i as f64 / 2.0)).collect()
}

/// One tuning day: predicted tiles and the tiles that actually fired.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TuningDay {
    pub day: usize,
    pub predicted: Vec<TileId>,
    pub observed: Vec<TileId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaChoice {
    pub sigma_km: f64,
    pub candidates: Vec<f64>,
    /// Recall at fixed coverage per candidate.
    pub recall: Vec<f64>,
    pub coverage: f64,
}

/// Picks the kernel width whose maps catch the most observed tile-days when
/// the top `coverage` share of tiles is flagged each day. Ties go to the
/// narrowest kernel.
pub fn tune_sigma(days: &[TuningDay], grid: &TileGrid, candidates: &[f64], coverage: f64) -> Result<SigmaChoice> {
    if candidates.is_empty() {
        return Err(Error::InvalidParam("no kernel widths to try".into()));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::InvalidParam(format!("coverage must be in (0, 1], got {coverage}")));
    }
    let n_flag = ((grid.n_tiles() as f64 * coverage).ceil() as usize).max(1);
    let total: usize = days.iter().map(|d| d.observed.len()).sum();
    let mut recall = Vec::with_capacity(candidates.len());
    for &s in candidates {
        let mut hits = 0usize;
        for d in days {
            if d.observed.is_empty() {
                continue;
            }
            let map = risk_map(d.day, &d.predicted, grid, s)?;
            if map.max() == 0.0 {
                continue;
            }
            let mut flagged = vec![false; grid.n_tiles() as usize];
            for t in map.ranking().into_iter().take(n_flag) {
                flagged[t.0 as usize] = map.intensity[t.0 as usize] > 0.0;
            }
            hits += d.observed.iter().filter(|t| flagged[t.0 as usize]).count();
        }
        recall.push(if total == 0 { 0.0 } else { hits as f64 / total as f64 });
    }
    let mut best = 0;
    for i in 1..candidates.len() {
        if recall[i] > recall[best] || (recall[i] == recall[best] && candidates[i] < candidates[best]) {
            best = i;
        }
    }
    Ok(SigmaChoice {
        sigma_km: candidates[best],
        candidates: candidates.to_vec(),
        recall,
        coverage,
    })
}
