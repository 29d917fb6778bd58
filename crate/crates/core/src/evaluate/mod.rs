//! Out-of-sample scoring, hit labelling, ROC analysis and risk maps.

mod export;
mod predict;
mod riskmap;
mod roc;

pub use export::{riskmap_geojson, write_auc_csv, write_predictions_csv, write_riskmap_csv, PREDICTION_CSV_HEADER};
pub use predict::{
    auc_table, hit_match, predict_days, predict_holdout, AucGroup, AucRow, AucTable, HitWindow, Labeled, LabeledRecord,
    PredictionRecord, Predictions,
};
pub use riskmap::{risk_map, sigma_grid, tune_sigma, RiskMap, SigmaChoice, TuningDay};
pub use roc::{null_auc_se, roc_auc, roc_curve, RocCurve};
