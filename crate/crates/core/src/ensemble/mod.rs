//! Per-target boosted combination of the retained transducers.

mod boost;
mod features;
mod store;
mod threshold;

use serde::{Deserialize, Serialize};

pub use boost::{fit_columns, BoostParams, Booster, FitReport, Node, Tree};
pub use features::{build_features, feature_columns, Catalog, ColumnSpec, FeatureMatrix, SourceCodes};
pub use store::{read_models, write_models};
pub use threshold::{tune_threshold, Confusion, Objective, ThresholdChoice};

use crate::error::{Error, Result};
use crate::net::GrangerNet;
use crate::quantize::{StreamSet, VarId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    /// Forecast horizon in days.
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    pub boost: BoostParams,
    #[serde(default = "default_cap")]
    pub max_columns: usize,
    /// Trailing share of training rows held out for the threshold.
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub objective: Objective,
}

fn default_horizon() -> u32 {
    7
}
fn default_cap() -> usize {
    500
}
fn default_validation() -> f64 {
    0.2
}

impl EnsembleParams {
    pub fn with_seed(seed: u64) -> Self {
        EnsembleParams {
            horizon: default_horizon(),
            boost: BoostParams::with_seed(seed),
            max_columns: default_cap(),
            validation_fraction: default_validation(),
            objective: Objective::default(),
        }
    }
}

/// A fitted predictor for one target variable.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub target: VarId,
    pub horizon: u32,
    /// Empty for the marginal fallback.
    pub catalog: Option<Catalog>,
    pub booster: Booster,
    pub threshold: ThresholdChoice,
    pub objective: Objective,
    /// The target had no usable in-edge and predicts its training rate.
    pub marginal: bool,
}

impl TargetModel {
    pub fn marginal(target: VarId, horizon: u32, rate: f64, objective: Objective) -> Self {
        TargetModel {
            target,
            horizon,
            catalog: None,
            booster: Booster::constant(0, rate),
            threshold: ThresholdChoice {
                tau: f64::INFINITY,
                value: 0.0,
                recall: 0.0,
                fpr: 0.0,
                f1: 0.0,
            },
            objective,
            marginal: true,
        }
    }

    pub fn n_columns(&self) -> usize {
        self.booster.n_features
    }

    pub fn predict_score(&self, row: &[f64]) -> Result<f64> {
        self.booster.score(row)
    }

    pub fn decide(&self, score: f64) -> bool {
        score >= self.threshold.tau
    }

    /// Scores at the given issue days against (possibly perturbed) streams.
    pub fn scores_at(&self, net: &GrangerNet, codes: &SourceCodes, times: &[usize]) -> Result<Vec<f64>> {
        let Some(catalog) = &self.catalog else {
            return Ok(vec![self.booster.base.clamp(0.0, 1.0); times.len()]);
        };
        let machines = catalog.bind(net)?;
        let cols = feature_columns(catalog, &machines, codes, times)?;
        let mut row = vec![0.0; cols.len()];
        (0..times.len())
            .map(|i| {
                for (r, c) in row.iter_mut().zip(&cols) {
                    *r = c[i];
                }
                self.booster.score(&row)
            })
            .collect()
    }
}

/// Result of fitting one target, with the training-side diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: TargetModel,
    pub report: Option<FitReport>,
}

/// Fits the booster on the leading training rows and tunes the threshold
/// on the trailing `validation_fraction`. Targets without usable in-edges
/// get the marginal model.
pub fn fit_target(net: &GrangerNet, set: &StreamSet, target: VarId, params: &EnsembleParams) -> Result<FitOutcome> {
    if !(params.validation_fraction > 0.0 && params.validation_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "validation fraction must be in (0, 1), got {}",
            params.validation_fraction
        )));
    }
    let fm = match build_features(net, set, target, params.horizon, params.max_columns) {
        Ok(fm) => fm,
        Err(Error::NoInEdges(_)) => {
            let rate = set.training_rate(target).ok_or_else(|| Error::UnknownVariable(target.to_string()))?;
            return Ok(FitOutcome {
                model: TargetModel::marginal(target, params.horizon, rate, params.objective),
                report: None,
            });
        }
        Err(e) => return Err(e),
    };
    let n = fm.n_rows();
    let n_val = ((n as f64 * params.validation_fraction).round() as usize).clamp(1, n.saturating_sub(1));
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} training rows for {target}")));
    }
    let fit_part = fm.slice(0..n - n_val);
    let val = fm.slice(n - n_val..n);
    let report = fit_columns(&fit_part.columns, &fit_part.labels, &params.boost)?;
    let val_scores: Vec<f64> = (0..val.n_rows())
        .map(|i| report.booster.score(&val.row(i)))
        .collect::<Result<_>>()?;
    let threshold = tune_threshold(&val_scores, &val.labels, params.objective)?;
    Ok(FitOutcome {
        model: TargetModel {
            target,
            horizon: params.horizon,
            catalog: Some(fm.catalog),
            booster: report.booster.clone(),
            threshold,
            objective: params.objective,
            marginal: false,
        },
        report: Some(report),
    })
}
