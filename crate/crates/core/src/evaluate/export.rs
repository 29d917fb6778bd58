use std::io::Write;

use serde_json::{json, Value};

use super::predict::{AucGroup, AucTable, PredictionRecord};
use super::riskmap::RiskMap;
use crate::quantize::{TileGrid, TimeWindow};

pub const PREDICTION_CSV_HEADER: [&str; 7] = ["issue_date", "pred_date", "tile_row", "tile_col", "class", "score", "decision"];

pub fn write_predictions_csv<W: Write>(
    writer: W,
    records: &[PredictionRecord],
    grid: &TileGrid,
    window: &TimeWindow,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTION_CSV_HEADER)?;
    for r in records {
        let (row, col) = grid.row_col(r.var.tile);
        w.write_record([
            window.date_of(r.issue_day).to_string(),
            window.date_of(r.pred_day).to_string(),
            row.to_string(),
            col.to_string(),
            r.var.class.name().to_string(),
            format!("{:.6}", r.score),
            (r.decision as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `scope,tile_row,tile_col,class,n_pos,n_neg,auc` with an empty `auc` for
/// single-class groups.
pub fn write_auc_csv<W: Write>(writer: W, table: &AucTable, grid: &TileGrid) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scope", "tile_row", "tile_col", "class", "n_pos", "n_neg", "auc"])?;
    for r in &table.rows {
        let (scope, tile, class) = match r.group {
            AucGroup::TileClass(t, c) => ("tile_class", Some(t), Some(c)),
            AucGroup::Tile(t) => ("tile", Some(t), None),
            AucGroup::Class(c) => ("class", None, Some(c)),
            AucGroup::All => ("all", None, None),
        };
        let (row, col) = tile.map(|t| grid.row_col(t)).map_or((String::new(), String::new()), |(r, c)| (r.to_string(), c.to_string()));
        w.write_record([
            scope.to_string(),
            row,
            col,
            class.map(|c| c.name().to_string()).unwrap_or_default(),
            r.n_pos.to_string(),
            r.n_neg.to_string(),
            r.auc.map(|a| format!("{a:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `date,tile_row,tile_col,lat,lon,intensity`, every tile of every map.
pub fn write_riskmap_csv<W: Write>(writer: W, maps: &[RiskMap], grid: &TileGrid, window: &TimeWindow) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "tile_row", "tile_col", "lat", "lon", "intensity"])?;
    for m in maps {
        let date = window.date_of(m.day).to_string();
        for (i, &v) in m.intensity.iter().enumerate() {
            let t = crate::quantize::TileId(i as u32);
            let (row, col) = grid.row_col(t);
            let (lat, lon) = grid.center(t);
            w.write_record([
                date.clone(),
                row.to_string(),
                col.to_string(),
                format!("{lat:.6}"),
                format!("{lon:.6}"),
                format!("{v:.6}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Tile polygons carrying the intensity of one map.
pub fn riskmap_geojson(map: &RiskMap, grid: &TileGrid, window: &TimeWindow) -> Value {
    let date = window.date_of(map.day).to_string();
    let features: Vec<Value> = map
        .intensity
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let t = crate::quantize::TileId(i as u32);
            let (row, col) = grid.row_col(t);
            let ring: Vec<[f64; 2]> = grid.ring(t).iter().map(|&(lon, lat)| [lon, lat]).collect();
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring] },
                "properties": {
                    "date": date,
                    "tile_row": row,
                    "tile_col": col,
                    "intensity": v,
                    "sigma_km": map.sigma_km,
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}
