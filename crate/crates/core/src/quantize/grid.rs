use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_km, LocalProjection};

/// Chicago cell size, degrees of latitude × longitude.
pub const CHICAGO_CELL: (f64, f64) = (0.00276, 0.0035);
/// Terror study cell size, degrees of latitude × longitude.
pub const TERROR_CELL: (f64, f64) = (1.0, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

/// Row-major tile index: `row * cols + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileId(pub u32);

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rectangular latitude/longitude grid anchored at its south-west corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_height: f64,
    pub cell_width: f64,
    pub rows: u32,
    pub cols: u32,
}

/// `ceil(x)` that forgives floating noise when `x` is within 1e-9 of an integer.
fn cells_needed(extent: f64, cell: f64) -> f64 {
    let x = extent / cell;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r.max(1.0)
    } else {
        x.ceil()
    }
}

pub fn build_grid(bounds: Bounds, cell_height: f64, cell_width: f64) -> Result<TileGrid> {
    let Bounds {
        south,
        west,
        north,
        east,
    } = bounds;
    if ![south, west, north, east, cell_height, cell_width]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::DegenerateGrid("non-finite bounds or cell size".into()));
    }
    if cell_height <= 0.0 || cell_width <= 0.0 {
        return Err(Error::DegenerateGrid(format!(
            "cell size must be positive, got {cell_height} x {cell_width}"
        )));
    }
    if north <= south || east <= west {
        return Err(Error::DegenerateGrid(format!(
            "empty bounds [{south}, {north}] x [{west}, {east}]"
        )));
    }
    let rows = cells_needed(north - south, cell_height);
    let cols = cells_needed(east - west, cell_width);
    if rows * cols > u32::MAX as f64 {
        return Err(Error::DegenerateGrid(format!("{rows} x {cols} tiles is too many")));
    }
    Ok(TileGrid {
        origin_lat: south,
        origin_lon: west,
        cell_height,
        cell_width,
        rows: rows as u32,
        cols: cols as u32,
    })
}

impl TileGrid {
    pub fn n_tiles(&self) -> u32 {
        self.rows * self.cols
    }

    pub fn north(&self) -> f64 {
        self.origin_lat + self.rows as f64 * self.cell_height
    }

    pub fn east(&self) -> f64 {
        self.origin_lon + self.cols as f64 * self.cell_width
    }

    pub fn tile(&self, row: u32, col: u32) -> TileId {
        debug_assert!(row < self.rows && col < self.cols);
        TileId(row * self.cols + col)
    }

    pub fn row_col(&self, tile: TileId) -> (u32, u32) {
        (tile.0 / self.cols, tile.0 % self.cols)
    }

    /// O(1) lookup by floor division. Points on the north or east edge belong
    /// to the last row or column; anything else outside the grid is `None`.
    pub fn tile_of(&self, lat: f64, lon: f64) -> Option<TileId> {
        let fr = ((lat - self.origin_lat) / self.cell_height).floor();
        let fc = ((lon - self.origin_lon) / self.cell_width).floor();
        if !(fr.is_finite() && fc.is_finite()) || fr < 0.0 || fc < 0.0 {
            return None;
        }
        let mut r = fr as u64;
        let mut c = fc as u64;
        if r == self.rows as u64 && lat <= self.north() {
            r -= 1;
        }
        if c == self.cols as u64 && lon <= self.east() {
            c -= 1;
        }
        if r >= self.rows as u64 || c >= self.cols as u64 {
            return None;
        }
        Some(self.tile(r as u32, c as u32))
    }

    pub fn center(&self, tile: TileId) -> (f64, f64) {
        let (r, c) = self.row_col(tile);
        (
            self.origin_lat + (r as f64 + 0.5) * self.cell_height,
            self.origin_lon + (c as f64 + 0.5) * self.cell_width,
        )
    }

    /// Polygon ring (lon, lat) of a tile, closed, counter-clockwise.
    pub fn ring(&self, tile: TileId) -> [(f64, f64); 5] {
        let (r, c) = self.row_col(tile);
        let s = self.origin_lat + r as f64 * self.cell_height;
        let w = self.origin_lon + c as f64 * self.cell_width;
        let n = s + self.cell_height;
        let e = w + self.cell_width;
        [(w, s), (e, s), (e, n), (w, n), (w, s)]
    }

    /// Great-circle distance between tile centres.
    pub fn center_distance_km(&self, a: TileId, b: TileId) -> f64 {
        let (la, oa) = self.center(a);
        let (lb, ob) = self.center(b);
        haversine_km(la, oa, lb, ob)
    }

    /// (height, width, corner-to-corner diagonal) of a tile in the given row, km.
    pub fn cell_dimensions_km(&self, row: u32) -> (f64, f64, f64) {
        let s = self.origin_lat + row as f64 * self.cell_height;
        let n = s + self.cell_height;
        let w = self.origin_lon;
        let e = w + self.cell_width;
        let mid = 0.5 * (s + n);
        (
            haversine_km(s, w, n, w),
            haversine_km(mid, w, mid, e),
            haversine_km(s, w, n, e),
        )
    }

    /// Planar projection about the grid centre, used for kernel sums.
    pub fn projection(&self) -> LocalProjection {
        LocalProjection::new(
            0.5 * (self.origin_lat + self.north()),
            0.5 * (self.origin_lon + self.east()),
        )
    }

    /// East-west tile width in km at the grid's central latitude.
    pub fn tile_width_km(&self) -> f64 {
        let p = self.projection();
        let (x0, _) = p.project(0.0, 0.0);
        let (x1, _) = p.project(0.0, self.cell_width);
        x1 - x0
    }
}
