use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SesRecord;
use crate::quantize::TileId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
}

/// OLS of a response on z-scored covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n: usize,
    pub intercept: Coefficient,
    pub slopes: Vec<Coefficient>,
    /// Constant or collinear covariates left out of the design.
    pub dropped: Vec<String>,
    /// `None` for a constant response.
    pub r_squared: Option<f64>,
    /// Tiles with a response but no region or SES row.
    pub unjoined: usize,
}

impl RegressionReport {
    pub fn slope(&self, name: &str) -> Option<&Coefficient> {
        self.slopes.iter().find(|c| c.name == name)
    }
}

/// Sample mean and standard deviation scaling.
fn zscore(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return None;
    }
    Some(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Regresses `y` on standardized covariates, dropping any covariate that is
/// constant or, after Gram-Schmidt against the intercept and the covariates
/// already kept, has a negligible residual.
pub fn ols_standardized(y: &[f64], covariates: &[(String, Vec<f64>)]) -> Result<RegressionReport> {
    let n = y.len();
    if let Some((name, _)) = covariates.iter().find(|(_, x)| x.len() != n) {
        return Err(Error::InvalidParam(format!("covariate {name} has the wrong length")));
    }
    let mut dropped = Vec::new();
    let mut kept: Vec<(String, Vec<f64>)> = Vec::new();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for (name, x) in covariates {
        let Some(z) = (if n > 1 { zscore(x) } else { None }) else {
            dropped.push(name.clone());
            continue;
        };
        let mut r = z.clone();
        for q in &basis {
            let d: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= d * qi;
            }
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        // z has squared norm n - 1
        if norm < 1e-8 * ((n - 1) as f64).sqrt() {
            dropped.push(name.clone());
            continue;
        }
        basis.push(r.iter().map(|v| v / norm).collect());
        kept.push((name.clone(), z));
    }
    let p = kept.len() + 1;
    if n <= p {
        return Err(Error::InsufficientData(format!("{n} observations for {p} coefficients")));
    }
    if !dropped.is_empty() {
        log::warn!("regression dropped covariates: {}", dropped.join(", "));
    }
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { kept[j - 1].1[i] });
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let inv = xtx
        .cholesky()
        .ok_or_else(|| Error::InsufficientData("design matrix is not positive definite".into()))?
        .inverse();
    let beta = &inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sigma2 = rss / (n - p) as f64;
    let coef = |j: usize, name: &str| Coefficient {
        name: name.to_string(),
        estimate: beta[j],
        stderr: (sigma2 * inv[(j, j)]).sqrt(),
    };
    Ok(RegressionReport {
        n,
        intercept: coef(0, "intercept"),
        slopes: kept.iter().enumerate().map(|(j, (name, _))| coef(j + 1, name)).collect(),
        dropped,
        r_squared: (tss > 0.0).then(|| 1.0 - rss / tss),
        unjoined: 0,
    })
}

pub const SES_COVARIATES: [&str; 5] = ["crowded_pct", "poverty_pct", "unemployed_pct", "income_pc", "hardship"];

fn field(r: &SesRecord, name: &str) -> f64 {
    match name {
        "crowded_pct" => r.crowded_pct,
        "poverty_pct" => r.poverty_pct,
        "unemployed_pct" => r.unemployed_pct,
        "income_pc" => r.income_pc,
        _ => r.hardship,
    }
}

/// Tile responses regressed on the SES row of the region containing each tile.
pub fn ses_regression(
    responses: &BTreeMap<TileId, f64>,
    tile_region: &BTreeMap<TileId, String>,
    ses: &[SesRecord],
) -> Result<RegressionReport> {
    let by_id: BTreeMap<&str, &SesRecord> = ses.iter().map(|r| (r.region_id.as_str(), r)).collect();
    let mut y = Vec::new();
    let mut rows = Vec::new();
    let mut unjoined = 0;
    for (t, &v) in responses {
        match tile_region.get(t).and_then(|id| by_id.get(id.as_str())) {
            Some(r) => {
                y.push(v);
                rows.push(*r);
            }
            None => unjoined += 1,
        }
    }
    if unjoined > 0 {
        log::warn!("{unjoined} tiles have no SES region and are left out of the regression");
    }
    let cov: Vec<(String, Vec<f64>)> = SES_COVARIATES
        .iter()
        .map(|&name| (name.to_string(), rows.iter().map(|r| field(r, name)).collect()))
        .collect();
    let mut rep = ols_standardized(&y, &cov)?;
    rep.unjoined = unjoined;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_point_closed_form() {
        // x = 1, 2, 4 -> mean 7/3, sample sd sqrt(7/3); y = 1, 3, 4
        let x = vec![1.0, 2.0, 4.0];
        let y = vec![1.0, 3.0, 4.0];
        let r = ols_standardized(&y, &[("x".into(), x.clone())]).unwrap();
        let (mx, my) = (7.0 / 3.0, 8.0 / 3.0);
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sd = (sxx / 2.0).sqrt();
        let b = sxy / sxx * sd;
        assert!((r.slopes[0].estimate - b).abs() < 1e-12, "{} vs {b}", r.slopes[0].estimate);
        assert!((r.intercept.estimate - my).abs() < 1e-12);
        let r2 = sxy * sxy / (sxx * y.iter().map(|v| (v - my).powi(2)).sum::<f64>());
        assert!((r.r_squared.unwrap() - r2).abs() < 1e-12);
        // one residual degree of freedom
        let rss = (1.0 - r2) * y.iter().map(|v| (v - my).powi(2)).sum::<f64>();
        assert!((r.slopes[0].stderr - (rss / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_response_has_zero_slopes() {
        let y = vec![0.3; 6];
        let cov = vec![("a".to_string(), vec![1.0, 5.0, 2.0, 8.0, 3.0, 4.0]), ("b".to_string(), vec![2.0, 1.0, 7.0, 3.0, 3.0, 9.0])];
        let r = ols_standardized(&y, &cov).unwrap();
        assert!(r.slopes.iter().all(|c| c.estimate.abs() < 1e-12));
        assert!((r.intercept.estimate - 0.3).abs() < 1e-12);
        assert_eq!(r.r_squared, None);
    }

    #[test]
    fn planted_hardship_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 80;
        let hardship: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let poverty: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..60.0)).collect();
        let z = zscore(&hardship).unwrap();
        let y: Vec<f64> = z.iter().map(|v| -0.5 * v + 0.2 * (rng.random::<f64>() - 0.5)).collect();
        let r = ols_standardized(&y, &[("poverty".into(), poverty), ("hardship".into(), hardship)]).unwrap();
        let h = r.slope("hardship").unwrap();
        assert!((h.estimate + 0.5).abs() < 3.0 * h.stderr, "{h:?}");
        assert!(h.stderr > 0.0);
    }

    #[test]
    fn collinear_and_constant_covariates_are_dropped() {
        let a = vec![1.0, 2.0, 3.0, 5.0, 8.0];
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v - 1.0).collect();
        let c = vec![4.0; 5];
        let y = vec![0.1, 0.4, 0.2, 0.9, 0.7];
        let r = ols_standardized(&y, &[("a".into(), a), ("b".into(), b), ("c".into(), c)]).unwrap();
        assert_eq!(r.dropped, vec!["b".to_string(), "c".to_string()]);
        assert_eq!(r.slopes.len(), 1);
    }

    #[test]
    fn too_few_observations() {
        assert!(ols_standardized(&[1.0, 2.0], &[("x".into(), vec![1.0, 3.0])]).is_err());
    }

    #[test]
    fn join_counts_unmatched_tiles() {
        let ses: Vec<SesRecord> = (0..5)
            .map(|i| SesRecord {
                region_id: format!("r{i}"),
                crowded_pct: 2.0 + i as f64,
                poverty_pct: 10.0 + (i * i) as f64,
                unemployed_pct: 5.0 + ((i * 7) % 5) as f64,
                income_pc: 20000.0 - 1000.0 * i as f64,
                hardship: 10.0 + 15.0 * i as f64,
            })
            .collect();
        let responses: BTreeMap<TileId, f64> = (0..7).map(|t| (TileId(t), -0.1 * t as f64)).collect();
        let join: BTreeMap<TileId, String> = (0..6).map(|t| (TileId(t), format!("r{}", t % 5))).collect();
        let r = ses_regression(&responses, &join, &ses).unwrap();
        assert_eq!(r.unjoined, 1);
        assert_eq!(r.n, 6);
    }
}
