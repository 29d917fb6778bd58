use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::quantize::{TileGrid, TileId};

/// Rings as (lon, lat) vertices; the first ring is the outer boundary.
type Polygon = Vec<Vec<(f64, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: String,
    polygons: Vec<Polygon>,
}

/// Region polygons from a GeoJSON feature collection keyed by the
/// `region_id` property.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Regions {
    pub regions: Vec<Region>,
}

fn ring(v: &Value) -> Result<Vec<(f64, f64)>> {
    let pts = v.as_array().ok_or_else(|| Error::Format("ring is not an array".into()))?;
    pts.iter()
        .map(|p| match p.as_array().map(|a| (a.first().and_then(Value::as_f64), a.get(1).and_then(Value::as_f64))) {
            Some((Some(x), Some(y))) => Ok((x, y)),
            _ => Err(Error::Format(format!("bad coordinate {p}"))),
        })
        .collect()
}

fn polygon(v: &Value) -> Result<Polygon> {
    v.as_array()
        .ok_or_else(|| Error::Format("polygon is not an array of rings".into()))?
        .iter()
        .map(ring)
        .collect()
}

/// Even-odd ray casting.
fn in_ring(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = ring.len();
    for i in 0..n {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[(i + n - 1) % n];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

fn in_polygon(p: &Polygon, x: f64, y: f64) -> bool {
    match p.split_first() {
        Some((outer, holes)) => in_ring(outer, x, y) && !holes.iter().any(|h| in_ring(h, x, y)),
        None => false,
    }
}

impl Regions {
    pub fn from_geojson(doc: &Value) -> Result<Regions> {
        let features = doc["features"]
            .as_array()
            .ok_or_else(|| Error::Format("region file is not a feature collection".into()))?;
        let mut regions = Vec::with_capacity(features.len());
        for f in features {
            let id = match &f["properties"]["region_id"] {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                _ => return Err(Error::Format("feature without a region_id property".into())),
            };
            let g = &f["geometry"];
            let polygons = match g["type"].as_str() {
                Some("Polygon") => vec![polygon(&g["coordinates"])?],
                Some("MultiPolygon") => g["coordinates"]
                    .as_array()
                    .ok_or_else(|| Error::Format(format!("region {id}: bad multipolygon")))?
                    .iter()
                    .map(polygon)
                    .collect::<Result<_>>()?,
                other => return Err(Error::Format(format!("region {id}: unsupported geometry {other:?}"))),
            };
            regions.push(Region { id, polygons });
        }
        Ok(Regions { regions })
    }

    pub fn read(path: &std::path::Path) -> Result<Regions> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Regions::from_geojson(&doc)
    }

    /// First region containing the point.
    pub fn locate(&self, lat: f64, lon: f64) -> Option<&str> {
        self.regions
            .iter()
            .find(|r| r.polygons.iter().any(|p| in_polygon(p, lon, lat)))
            .map(|r| r.id.as_str())
    }

    /// Region of each tile centre; tiles outside every region are omitted.
    pub fn join_tiles(&self, grid: &TileGrid, tiles: impl IntoIterator<Item = TileId>) -> BTreeMap<TileId, String> {
        tiles
            .into_iter()
            .filter_map(|t| {
                let (lat, lon) = grid.center(t);
                self.locate(lat, lon).map(|id| (t, id.to_string()))
            })
            .collect()
    }
}
