use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inject::inject_slice;
use crate::ensemble::TargetModel;
use crate::error::{Error, Result};
use crate::evaluate::predict_days;
use crate::ingest::EventClass;
use crate::net::GrangerNet;
use crate::quantize::{StreamSet, TileId, VarId};

/// Signed relative rate changes per input class, applied jointly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub deltas: BTreeMap<EventClass, f64>,
    pub seed: u64,
    pub replicates: usize,
}

impl PerturbationSpec {
    pub fn is_null(&self) -> bool {
        self.deltas.values().all(|&d| d == 0.0)
    }
}

/// Unperturbed predicted rates over the holdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub horizon: u32,
    pub pred_days: Vec<usize>,
    /// First day whose events can reach a holdout prediction.
    pub window_start: usize,
    pub means: BTreeMap<VarId, f64>,
}

fn mean_scores(
    models: &BTreeMap<VarId, TargetModel>,
    net: &GrangerNet,
    set: &StreamSet,
    horizon: u32,
    days: &[usize],
) -> Result<BTreeMap<VarId, f64>> {
    let preds = predict_days(models, net, set, horizon, days)?;
    let mut acc: BTreeMap<VarId, f64> = BTreeMap::new();
    for r in &preds.records {
        *acc.entry(r.var).or_default() += r.score;
    }
    let n = days.len() as f64;
    Ok(acc.into_iter().map(|(v, s)| (v, s / n)).collect())
}

pub fn baseline(models: &BTreeMap<VarId, TargetModel>, net: &GrangerNet, set: &StreamSet, horizon: u32) -> Result<Baseline> {
    if set.holdout_len() == 0 {
        return Err(Error::InsufficientData("no holdout days to perturb".into()));
    }
    let pred_days: Vec<usize> = (set.train_len()..set.total_len()).collect();
    let window_start = set.train_len().saturating_sub(net.max_delay as usize + net.depth);
    let means = mean_scores(models, net, set, horizon, &pred_days)?;
    Ok(Baseline {
        horizon,
        pred_days,
        window_start,
        means,
    })
}

fn stream_key(replicate: usize, var: VarId) -> u64 {
    ((replicate as u64) << 40) | ((var.tile.0 as u64) << 3) | var.class.code() as u64
}

/// Copy of `set` with every stream of a perturbed class injected from
/// `window_start` on. The generator depends only on (seed, replicate, var),
/// so all cells of a surface share their random numbers.
pub fn perturbed_set(
    set: &StreamSet,
    deltas: &BTreeMap<EventClass, f64>,
    window_start: usize,
    seed: u64,
    replicate: usize,
) -> Result<StreamSet> {
    let mut out = set.clone();
    for v in set.vars() {
        let Some(&delta) = deltas.get(&v.class) else { continue };
        if delta == 0.0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_key(replicate, v));
        let s = out.get_mut(v).expect("listed var");
        inject_slice(&mut s.values_mut()[window_start..], delta, &mut rng)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanSe {
    fn of(xs: &[f64]) -> MeanSe {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return MeanSe { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        MeanSe {
            mean,
            stderr: (var / n).sqrt(),
        }
    }
}

/// City-wide relative change of one output class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassResponse {
    pub class: EventClass,
    pub change: MeanSe,
    pub n_valid_tiles: usize,
    /// Tiles with a zero baseline rate.
    pub n_excluded_tiles: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub city: Vec<ClassResponse>,
    pub tiles: BTreeMap<VarId, MeanSe>,
}

impl Response {
    pub fn class(&self, class: EventClass) -> Option<&ClassResponse> {
        self.city.iter().find(|c| c.class == class)
    }

    /// Per-tile responses of one class.
    pub fn tiles_of(&self, class: EventClass) -> Vec<(TileId, MeanSe)> {
        self.tiles.iter().filter(|(v, _)| v.class == class).map(|(v, m)| (v.tile, *m)).collect()
    }
}

/// Relative change of the holdout-mean predicted rate, per tile and summed
/// over tiles, averaged over replicates.
pub fn response(
    models: &BTreeMap<VarId, TargetModel>,
    net: &GrangerNet,
    set: &StreamSet,
    base: &Baseline,
    spec: &PerturbationSpec,
) -> Result<Response> {
    if spec.replicates == 0 {
        return Err(Error::InvalidParam("at least one replicate is required".into()));
    }
    let reps = if spec.is_null() { 1 } else { spec.replicates };
    let runs: Vec<BTreeMap<VarId, f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let p = perturbed_set(set, &spec.deltas, base.window_start, spec.seed, r)?;
            mean_scores(models, net, &p, base.horizon, &base.pred_days)
        })
        .collect::<Result<_>>()?;
    let valid: Vec<VarId> = base.means.iter().filter(|(_, &m)| m > 0.0).map(|(&v, _)| v).collect();
    let mut tiles = BTreeMap::new();
    for &v in &valid {
        let b = base.means[&v];
        let xs: Vec<f64> = runs.iter().map(|run| (run[&v] - b) / b).collect();
        tiles.insert(v, MeanSe::of(&xs));
    }
    let mut city = Vec::new();
    for &class in &set.classes {
        let vars: Vec<VarId> = valid.iter().copied().filter(|v| v.class == class).collect();
        let total = base.means.keys().filter(|v| v.class == class).count();
        let b: f64 = vars.iter().map(|v| base.means[v]).sum();
        let xs: Vec<f64> = runs
            .iter()
            .map(|run| {
                if b > 0.0 {
                    (vars.iter().map(|v| run[v]).sum::<f64>() - b) / b
                } else {
                    0.0
                }
            })
            .collect();
        city.push(ClassResponse {
            class,
            change: MeanSe::of(&xs),
            n_valid_tiles: vars.len(),
            n_excluded_tiles: total - vars.len(),
        });
    }
    Ok(Response { city, tiles })
}

/// Full-factorial grid over the two incident classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceParams {
    pub deltas: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub max_abs_delta: f64,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        SurfaceParams {
            deltas: vec![-0.10, -0.05, -0.01, 0.0, 0.01, 0.05, 0.10],
            replicates: 20,
            seed: 0,
            max_abs_delta: 0.10,
        }
    }
}

impl SurfaceParams {
    pub fn validate(&self) -> Result<()> {
        if !self.deltas.contains(&0.0) {
            return Err(Error::InvalidParam("perturbation grid must include 0".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(d.abs() <= self.max_abs_delta)) {
            return Err(Error::InvalidParam(format!(
                "perturbation {d} exceeds the bound {}",
                self.max_abs_delta
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParam("at least one replicate is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub deltas: [f64; 2],
    /// `None` when some stream cannot absorb the perturbation.
    pub response: Option<Response>,
    pub invalid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSurface {
    pub inputs: [EventClass; 2],
    pub outputs: Vec<EventClass>,
    pub cells: Vec<SurfaceCell>,
}

impl ResponseSurface {
    pub fn cell(&self, a: f64, b: f64) -> Option<&SurfaceCell> {
        self.cells.iter().find(|c| c.deltas == [a, b])
    }
}

pub fn incident_inputs(set: &StreamSet) -> Result<[EventClass; 2]> {
    let inc: Vec<EventClass> = set.classes.iter().copied().filter(|c| !c.is_count()).collect();
    match inc[..] {
        [a, b] => Ok([a, b]),
        _ => Err(Error::InvalidParam(format!("expected two incident classes, found {}", inc.len()))),
    }
}

pub fn sweep_surface(
    models: &BTreeMap<VarId, TargetModel>,
    net: &GrangerNet,
    set: &StreamSet,
    horizon: u32,
    params: &SurfaceParams,
) -> Result<ResponseSurface> {
    params.validate()?;
    let inputs = incident_inputs(set)?;
    let base = baseline(models, net, set, horizon)?;
    let grid: Vec<[f64; 2]> = params
        .deltas
        .iter()
        .flat_map(|&a| params.deltas.iter().map(move |&b| [a, b]))
        .collect();
    let cells = grid
        .into_par_iter()
        .map(|deltas| {
            let spec = PerturbationSpec {
                deltas: inputs.iter().copied().zip(deltas).collect(),
                seed: params.seed,
                replicates: params.replicates,
            };
            match response(models, net, set, &base, &spec) {
                Ok(r) => Ok(SurfaceCell {
                    deltas,
                    response: Some(r),
                    invalid: None,
                }),
                Err(e @ Error::InfeasiblePerturbation { .. }) => {
                    log::warn!("perturbation cell {deltas:?} is infeasible: {e}");
                    Ok(SurfaceCell {
                        deltas,
                        response: None,
                        invalid: Some(e.to_string()),
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(ResponseSurface {
        inputs,
        outputs: set.classes.clone(),
        cells,
    })
}

/// Slope of an output's response along one input axis, the other input
/// held at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignEntry {
    pub output: EventClass,
    pub input: EventClass,
    pub slope: f64,
    pub stderr: f64,
    /// -1, 0 or +1; zero unless the slope clears three standard errors.
    pub sign: i8,
}

/// Through-origin least-squares slope on each axis.
pub fn sign_pattern(surface: &ResponseSurface) -> Vec<SignEntry> {
    let mut out = Vec::new();
    for &output in &surface.outputs {
        for (axis, &input) in surface.inputs.iter().enumerate() {
            let (mut sxy, mut sxx, mut var) = (0.0, 0.0, 0.0);
            for c in &surface.cells {
                let (d, other) = (c.deltas[axis], c.deltas[1 - axis]);
                if other != 0.0 || d == 0.0 {
                    continue;
                }
                let Some(r) = c.response.as_ref().and_then(|r| r.class(output)) else { continue };
                sxy += d * r.change.mean;
                sxx += d * d;
                var += d * d * r.change.stderr * r.change.stderr;
            }
            let (slope, stderr) = if sxx > 0.0 { (sxy / sxx, var.sqrt() / sxx) } else { (0.0, 0.0) };
            let sign = if slope != 0.0 && slope.abs() > 3.0 * stderr { slope.signum() as i8 } else { 0 };
            out.push(SignEntry {
                output,
                input,
                slope,
                stderr,
                sign,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{fit_target, EnsembleParams};
    use crate::net::{sweep, SweepParams};
    use crate::synth;
    use crate::xpfsa::XpfsaParams;

    fn fitted(set: &StreamSet, max_delay: u32, depth: usize, horizon: u32) -> (GrangerNet, BTreeMap<VarId, TargetModel>) {
        let params = SweepParams {
            max_delay,
            xpfsa: XpfsaParams {
                depth,
                ..Default::default()
            },
            gamma_min: 0.02,
            ..Default::default()
        };
        let net = sweep(set, &params).unwrap();
        let mut ep = EnsembleParams::with_seed(3);
        ep.horizon = horizon;
        ep.boost.rounds = 40;
        let models = set
            .vars()
            .into_iter()
            .map(|v| (v, fit_target(&net, set, v, &ep).unwrap().model))
            .collect();
        (net, models)
    }

    fn small_params() -> SurfaceParams {
        SurfaceParams {
            deltas: vec![-0.1, 0.0, 0.1],
            replicates: 6,
            seed: 11,
            max_abs_delta: 0.1,
        }
    }

    #[test]
    fn origin_cell_is_exactly_zero() {
        let cols = synth::periodic_columns(4, 700, 7, 0.1, 0.8, 2);
        let set = synth::set_from_columns(cols, 600);
        let (net, models) = fitted(&set, 8, 2, 7);
        let s = sweep_surface(&models, &net, &set, 7, &small_params()).unwrap();
        assert_eq!(s.cells.len(), 9);
        let r = s.cell(0.0, 0.0).unwrap().response.as_ref().unwrap();
        assert!(r.city.iter().all(|c| c.change.mean == 0.0 && c.change.stderr == 0.0));
        assert!(r.tiles.values().all(|m| m.mean == 0.0));
    }

    #[test]
    fn perturbed_window_covers_only_the_tail() {
        let cols = synth::periodic_columns(2, 300, 5, 0.2, 0.6, 4);
        let set = synth::set_from_columns(cols, 250);
        let deltas = [(EventClass::Violent, 0.1)].into_iter().collect();
        let p = perturbed_set(&set, &deltas, 200, 1, 0).unwrap();
        for v in set.vars() {
            let (a, b) = (set.get(v).unwrap().values(), p.get(v).unwrap().values());
            assert_eq!(a[..200], b[..200]);
            if v.class == EventClass::Property {
                assert_eq!(a, b);
            }
        }
        let ones = |s: &StreamSet, v| s.get(v).unwrap().values()[200..].iter().filter(|&&b| b).count();
        assert!(ones(&p, synth::var_of(0)) >= ones(&set, synth::var_of(0)));
    }

    #[test]
    fn independent_classes_do_not_cross() {
        let cols = synth::self_exciting_columns(6, 1500, 7, 0.2, 0.7, 5);
        let set = synth::set_from_columns(cols, 1400);
        let (net, models) = fitted(&set, 8, 2, 7);
        let s = sweep_surface(&models, &net, &set, 7, &small_params()).unwrap();
        for c in &s.cells {
            let r = c.response.as_ref().unwrap();
            for (axis, &input) in s.inputs.iter().enumerate() {
                if c.deltas[axis] != 0.0 && c.deltas[1 - axis] == 0.0 {
                    let other = s.inputs[1 - axis];
                    let cr = r.class(other).unwrap();
                    assert!(cr.change.mean.abs() <= 3.0 * cr.change.stderr, "{input:?} -> {other:?}: {cr:?}");
                }
            }
        }
    }

    #[test]
    fn mutual_suppression_has_negative_cross_signs() {
        let cols = synth::suppressive_columns(4, 2400, 7, 0.7, 0.15, 8);
        let set = synth::set_from_columns(cols, 2200);
        let (net, models) = fitted(&set, 8, 1, 7);
        let s = sweep_surface(&models, &net, &set, 7, &small_params()).unwrap();
        let pattern = sign_pattern(&s);
        for e in &pattern {
            if e.output != e.input {
                assert_eq!(e.sign, -1, "{e:?}");
            }
        }
    }

    #[test]
    fn grid_without_origin_is_rejected() {
        let p = SurfaceParams {
            deltas: vec![-0.1, 0.1],
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = SurfaceParams {
            deltas: vec![0.0, 0.2],
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn saturated_stream_marks_cells_invalid() {
        let mut cols = synth::periodic_columns(2, 300, 5, 0.2, 0.6, 4);
        for b in &mut cols[0][200..] {
            *b = true;
        }
        let set = synth::set_from_columns(cols, 280);
        let (net, models) = fitted(&set, 3, 1, 1);
        let s = sweep_surface(&models, &net, &set, 1, &small_params()).unwrap();
        assert!(s.cell(0.1, 0.0).unwrap().invalid.is_some());
        assert!(s.cell(-0.1, 0.0).unwrap().response.is_some());
        assert!(s.cell(0.0, 0.1).unwrap().response.is_some());
    }
}
