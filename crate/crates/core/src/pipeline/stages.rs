use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::artifacts::{read_classified, read_predictions, write_classified, write_predictions};
use super::config::RunConfig;
use super::manifest::{sha256_file, verify, write_atomic, FileHash, Manifest};
use crate::ensemble::{fit_target, read_models, write_models, TargetModel};
use crate::error::{Error, Result};
use crate::evaluate::{
    auc_table, hit_match, predict_days, predict_holdout, risk_map, riskmap_geojson, roc_auc, roc_curve, sigma_grid,
    tune_sigma, write_auc_csv, write_predictions_csv, write_riskmap_csv, AucGroup, PredictionRecord, TuningDay,
};
use crate::ingest::{classify_events, parse_event_log, parse_ses_table, EventClass};
use crate::net::{
    delay_counts, diffusion_profile, influence_radius, model_bound, read_net, run_sweep, write_edge_csv, write_net,
    DiffusionNorm, GrangerNet,
};
use crate::perturb::{
    ses_regression, sign_pattern, sweep_surface, write_regression_csv, write_regression_text, write_sign_csv,
    write_surface_csv, write_tile_response_csv, Regions,
};
use crate::quantize::{build_grid, prune_sparse, rasterize, read_stream_set, write_stream_set, Bounds, StreamSet, TileId, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Quantize,
    Sweep,
    Fit,
    Predict,
    Evaluate,
    Riskmap,
    Perturb,
    Diffusion,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Quantize,
        Stage::Sweep,
        Stage::Fit,
        Stage::Predict,
        Stage::Evaluate,
        Stage::Riskmap,
        Stage::Perturb,
        Stage::Diffusion,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Quantize => "quantize",
            Stage::Sweep => "sweep",
            Stage::Fit => "fit",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Riskmap => "riskmap",
            Stage::Perturb => "perturb",
            Stage::Diffusion => "diffusion",
            Stage::Report => "report",
        }
    }

    /// Stages whose artifacts this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Ingest => &[],
            Quantize => &[Ingest],
            Sweep => &[Quantize],
            Fit => &[Quantize, Sweep],
            Predict => &[Quantize, Sweep, Fit],
            Evaluate => &[Quantize, Predict],
            Riskmap => &[Quantize, Sweep, Fit, Predict],
            Perturb => &[Quantize, Sweep, Fit],
            Diffusion => &[Sweep],
            Report => &[Quantize, Sweep, Predict, Evaluate, Riskmap, Perturb, Diffusion],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// Already complete with unchanged inputs.
    pub skipped: bool,
}

/// Per-run bookkeeping: every file read is verified and hashed, every file
/// written is recorded for the manifest.
struct Ctx<'a> {
    cfg: &'a RunConfig,
    root: PathBuf,
    hash: String,
    stage: Stage,
    manifests: HashMap<Stage, Manifest>,
    inputs: Vec<FileHash>,
    outputs: Vec<String>,
}

impl<'a> Ctx<'a> {
    fn manifest(&mut self, stage: Stage) -> Result<&Manifest> {
        if !self.manifests.contains_key(&stage) {
            let m = Manifest::load(&self.root, stage.name())?.ok_or_else(|| {
                Error::MissingArtifact(format!(
                    "{} (run the {stage} stage first)",
                    super::manifest::manifest_path(&self.root, stage.name()).display()
                ))
            })?;
            m.check_config(&self.root, &self.hash)?;
            self.manifests.insert(stage, m);
        }
        Ok(&self.manifests[&stage])
    }

    /// Reads an upstream artifact after checking it against its manifest.
    fn read(&mut self, stage: Stage, file: &str) -> Result<Vec<u8>> {
        let rel = format!("{stage}/{file}");
        let root = self.root.clone();
        let entry = self
            .manifest(stage)?
            .output(&rel)
            .cloned()
            .ok_or_else(|| Error::MissingArtifact(format!("{rel} is not listed in the {stage} manifest")))?;
        let path = root.join(&rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let found = hex::encode(<sha2::Sha256 as sha2::Digest>::digest(&bytes));
        if found != entry.sha256 {
            return Err(Error::HashMismatch {
                path,
                expected: entry.sha256,
                found,
            });
        }
        if !self.inputs.contains(&entry) {
            self.inputs.push(entry);
        }
        Ok(bytes)
    }

    /// Records a raw input file and returns its resolved path.
    fn raw(&mut self, p: &Path) -> Result<PathBuf> {
        let path = self.cfg.resolve(p);
        let abs = std::fs::canonicalize(&path).map_err(|e| Error::io(&path, e))?;
        let (sha256, bytes) = sha256_file(&abs)?;
        self.inputs.push(FileHash {
            path: abs.display().to_string(),
            sha256,
            bytes,
        });
        Ok(abs)
    }

    fn write(&mut self, file: &str, bytes: &[u8]) -> Result<()> {
        let rel = format!("{}/{file}", self.stage);
        write_atomic(&self.root.join(&rel), bytes)?;
        self.outputs.push(rel);
        Ok(())
    }

    fn write_json(&mut self, file: &str, v: &Value) -> Result<()> {
        let mut b = serde_json::to_vec_pretty(v).expect("json serializes");
        b.push(b'\n');
        self.write(file, &b)
    }

    fn write_csv(&mut self, file: &str, f: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), csv::Error>) -> Result<()> {
        let mut b = Vec::new();
        f(&mut b).map_err(|e| Error::Format(format!("{file}: {e}")))?;
        self.write(file, &b)
    }

    fn stream_set(&mut self) -> Result<StreamSet> {
        read_stream_set(&self.read(Stage::Quantize, "streams.bin")?)
    }

    fn net(&mut self) -> Result<GrangerNet> {
        let bin = self.read(Stage::Sweep, "edges.bin")?;
        let idx = self.read(Stage::Sweep, "edges.idx")?;
        read_net(&bin, &idx)
    }

    fn models(&mut self) -> Result<BTreeMap<VarId, TargetModel>> {
        Ok(read_models(&self.read(Stage::Fit, "models.bin")?)?
            .into_iter()
            .map(|m| (m.target, m))
            .collect())
    }

    fn predictions(&mut self) -> Result<Vec<PredictionRecord>> {
        read_predictions(&self.read(Stage::Predict, "predictions.bin")?)
    }
}

fn resolve_input(root: &Path, f: &FileHash) -> PathBuf {
    let p = Path::new(&f.path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Runs one stage, or confirms it is already complete.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<StageOutcome> {
    let root = cfg.output_dir();
    let hash = cfg.hash();
    if let Some(m) = Manifest::load(&root, stage.name())? {
        m.check_config(&root, &hash)?;
        for f in &m.inputs {
            verify(&resolve_input(&root, f), &f.sha256)?;
        }
        m.verify_outputs(&root)?;
        log::info!("{stage}: complete, nothing to do");
        return Ok(StageOutcome { stage, skipped: true });
    }
    let mut ctx = Ctx {
        cfg,
        root: root.clone(),
        hash: hash.clone(),
        stage,
        manifests: HashMap::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    for &up in stage.upstream() {
        ctx.manifest(up)?;
    }
    let start = Instant::now();
    log::info!("{stage}: running");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_body(&mut ctx))?;
    let outputs = ctx
        .outputs
        .iter()
        .map(|rel| super::manifest::hash_entry(&root, rel))
        .collect::<Result<Vec<_>>>()?;
    let m = Manifest::new(stage.name(), &hash, ctx.inputs, outputs, start.elapsed().as_millis() as u64);
    m.save(&root)?;
    log::info!("{stage}: done in {:.1} s", start.elapsed().as_secs_f64());
    Ok(StageOutcome { stage, skipped: false })
}

/// Every stage in order.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<StageOutcome>> {
    Stage::ALL.iter().map(|&s| run_stage(cfg, s)).collect()
}

fn run_body(ctx: &mut Ctx) -> Result<()> {
    match ctx.stage {
        Stage::Ingest => ingest(ctx),
        Stage::Quantize => quantize(ctx),
        Stage::Sweep => sweep(ctx),
        Stage::Fit => fit(ctx),
        Stage::Predict => predict(ctx),
        Stage::Evaluate => evaluate(ctx),
        Stage::Riskmap => riskmap(ctx),
        Stage::Perturb => perturb(ctx),
        Stage::Diffusion => diffusion(ctx),
        Stage::Report => report(ctx),
    }
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn ingest(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let path = ctx.raw(&cfg.paths.events)?;
    let parsed = parse_event_log(&path, cfg.data.schema)?;
    let classified = classify_events(&parsed.events, &cfg.category_map()?)?;
    ctx.write("events.csv", &write_classified(&classified.records)?)?;
    ctx.write_json(
        "summary.json",
        &json!({
            "rows": parsed.total_rows(),
            "malformed": parsed.malformed.len(),
            "classified": classified.n_classified,
            "ignored": classified.n_ignored,
            "count_records": classified.n_count_records,
            "records": classified.records.len(),
        }),
    )
}

fn quantize(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let events = read_classified(&ctx.read(Stage::Ingest, "events.csv")?)?;
    let g = &cfg.grid;
    let bounds = match g.bounds {
        Some(b) => b,
        None => {
            if events.is_empty() {
                return Err(Error::InsufficientData("no classified events to bound the grid".into()));
            }
            let (mut s, mut w, mut n, mut e) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for ev in &events {
                s = s.min(ev.latitude);
                n = n.max(ev.latitude);
                w = w.min(ev.longitude);
                e = e.max(ev.longitude);
            }
            Bounds {
                south: s,
                west: w,
                north: if n > s { n } else { s + g.cell_height },
                east: if e > w { e } else { w + g.cell_width },
            }
        }
    };
    let grid = build_grid(bounds, g.cell_height, g.cell_width)?;
    let classes = cfg.data.schema.classes().to_vec();
    let (mut set, report) = rasterize(&events, &grid, &classes, cfg.window()?)?;
    let all_tiles = set.tiles().len();
    if let Some(f) = cfg.data.min_event_fraction {
        set = prune_sparse(&set, f)?;
    }
    let rates: BTreeMap<&str, f64> = classes
        .iter()
        .map(|&c| {
            let vars: Vec<VarId> = set.vars().into_iter().filter(|v| v.class == c).collect();
            let r = vars.iter().map(|&v| set.training_rate(v).unwrap_or(0.0)).sum::<f64>() / vars.len().max(1) as f64;
            (c.name(), r)
        })
        .collect();
    ctx.write("streams.bin", &write_stream_set(&set))?;
    ctx.write_json(
        "summary.json",
        &json!({
            "rows": grid.rows,
            "cols": grid.cols,
            "tiles": all_tiles,
            "tiles_kept": set.tiles().len(),
            "streams": set.len(),
            "train_days": set.train_len(),
            "holdout_days": set.holdout_len(),
            "outside_grid": report.outside_grid,
            "outside_window": report.outside_window,
            "mean_training_rate": rates,
        }),
    )
}

fn sweep(ctx: &mut Ctx) -> Result<()> {
    let set = ctx.stream_set()?;
    let log = ctx.root.join("sweep").join("checkpoint.log");
    std::fs::create_dir_all(ctx.root.join("sweep")).map_err(|e| Error::io(ctx.root.join("sweep"), e))?;
    let net = run_sweep(&set, &ctx.cfg.sweep, Some(&log))?;
    let (bin, idx) = write_net(&net);
    ctx.write("edges.bin", &bin)?;
    ctx.write("edges.idx", &idx)?;
    ctx.write_csv("edges.csv", |b| write_edge_csv(b, &net))?;
    ctx.write_json(
        "summary.json",
        &json!({
            "variables": net.vars.len(),
            "bound": model_bound(net.vars.len() as u64, net.max_delay),
            "attempted": net.attempted,
            "retained": net.retained(),
        }),
    )?;
    std::fs::remove_file(&log).map_err(|e| Error::io(&log, e))
}

fn fit(ctx: &mut Ctx) -> Result<()> {
    let set = ctx.stream_set()?;
    let net = ctx.net()?;
    let params = &ctx.cfg.ensemble;
    let fitted: Vec<_> = set
        .vars()
        .into_par_iter()
        .map(|v| fit_target(&net, &set, v, params))
        .collect::<Result<_>>()?;
    let models: Vec<TargetModel> = fitted.iter().map(|f| f.model.clone()).collect();
    ctx.write("models.bin", &write_models(&models))?;
    let grid = set.grid;
    ctx.write_csv("fit.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["tile_row", "tile_col", "class", "n_columns", "marginal", "tau", "val_recall", "val_fpr", "train_loss"])?;
        for f in &fitted {
            let m = &f.model;
            let (r, c) = grid.row_col(m.target.tile);
            w.write_record([
                r.to_string(),
                c.to_string(),
                m.target.class.name().to_string(),
                m.n_columns().to_string(),
                (m.marginal as u8).to_string(),
                f6(m.threshold.tau),
                f6(m.threshold.recall),
                f6(m.threshold.fpr),
                f.report.as_ref().and_then(|r| r.train_loss.last()).map(|&l| f6(l)).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn predict(ctx: &mut Ctx) -> Result<()> {
    let set = ctx.stream_set()?;
    let net = ctx.net()?;
    let models = ctx.models()?;
    let preds = predict_holdout(&models, &net, &set, ctx.cfg.ensemble.horizon)?;
    ctx.write("predictions.bin", &write_predictions(&preds.records))?;
    ctx.write_csv("predictions.csv", |b| write_predictions_csv(b, &preds.records, &set.grid, &set.window))?;
    ctx.write_json(
        "summary.json",
        &json!({ "records": preds.records.len(), "fallback_variables": preds.n_fallback_vars }),
    )
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Highest TPR on the curve with FPR at most `cap`.
fn tpr_at(curve: &crate::evaluate::RocCurve, cap: f64) -> f64 {
    curve
        .fpr
        .iter()
        .zip(&curve.tpr)
        .filter(|(f, _)| **f <= cap)
        .map(|(_, t)| *t)
        .fold(0.0, f64::max)
}

fn evaluate(ctx: &mut Ctx) -> Result<()> {
    let set = ctx.stream_set()?;
    let records = ctx.predictions()?;
    let labeled = hit_match(&records, &set, ctx.cfg.evaluate.hit_window)?;
    let table = auc_table(&labeled.records);
    ctx.write_csv("auc.csv", |b| write_auc_csv(b, &table, &set.grid))?;
    let scores: Vec<f64> = labeled.records.iter().map(|l| l.record.score).collect();
    let labels: Vec<bool> = labeled.records.iter().map(|l| l.label).collect();
    let pooled = roc_curve(&scores, &labels).ok();
    if let Some(c) = &pooled {
        ctx.write_csv("roc.csv", |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["fpr", "tpr"])?;
            for (f, t) in c.fpr.iter().zip(&c.tpr) {
                w.write_record([f6(*f), f6(*t)])?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    let base: Vec<f64> = labeled
        .records
        .iter()
        .map(|l| set.training_rate(l.record.var).unwrap_or(0.0))
        .collect();
    let baseline_auc = roc_auc(&base, &labels).ok();
    // per-variable curves for the TPR at a fixed FPR
    let mut by_var: BTreeMap<VarId, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for l in &labeled.records {
        let e = by_var.entry(l.record.var).or_default();
        e.0.push(l.record.score);
        e.1.push(l.label);
    }
    let tprs: Vec<f64> = by_var
        .values()
        .filter_map(|(s, y)| roc_curve(s, y).ok())
        .map(|c| tpr_at(&c, 0.2))
        .collect();
    let tile_class = table.values(|g| matches!(g, AucGroup::TileClass(..)));
    let per_class: BTreeMap<&str, Option<f64>> = set
        .classes
        .iter()
        .map(|&c| (c.name(), table.get(AucGroup::Class(c)).and_then(|r| r.auc)))
        .collect();
    let cat: Vec<f64> = table.class_averaged_tile_auc().into_values().collect();
    ctx.write_json(
        "summary.json",
        &json!({
            "records": labeled.records.len(),
            "dropped": labeled.dropped,
            "excluded_groups": table.excluded,
            "pooled_auc": pooled.as_ref().map(|c| c.auc),
            "baseline_pooled_auc": baseline_auc,
            "class_auc": per_class,
            "tile_class_auc_mean": mean(&tile_class),
            "tile_class_auc_median": median(tile_class.clone()),
            "tile_class_auc_count": tile_class.len(),
            "class_averaged_tile_auc_mean": mean(&cat),
            "median_tpr_at_fpr_0.2": median(tprs),
        }),
    )
}

fn incident(set: &StreamSet) -> Vec<EventClass> {
    set.classes.iter().copied().filter(|c| !c.is_count()).collect()
}

fn predicted_tiles<'a>(records: impl Iterator<Item = &'a PredictionRecord>, classes: &[EventClass]) -> BTreeMap<usize, BTreeSet<TileId>> {
    let mut out: BTreeMap<usize, BTreeSet<TileId>> = BTreeMap::new();
    for r in records {
        let e = out.entry(r.pred_day).or_default();
        if r.decision && classes.contains(&r.var.class) {
            e.insert(r.var.tile);
        }
    }
    out
}

fn riskmap(ctx: &mut Ctx) -> Result<()> {
    let set = ctx.stream_set()?;
    let net = ctx.net()?;
    let models = ctx.models()?;
    let records = ctx.predictions()?;
    let cfg = ctx.cfg;
    let h = cfg.ensemble.horizon as usize;
    let classes = incident(&set);
    let first = set.train_len().saturating_sub(cfg.evaluate.tune_days).max(h);
    let tune: Vec<usize> = (first..set.train_len()).collect();
    let tune_preds = predict_days(&models, &net, &set, cfg.ensemble.horizon, &tune)?;
    let days: Vec<TuningDay> = predicted_tiles(tune_preds.records.iter(), &classes)
        .into_iter()
        .map(|(day, tiles)| {
            let observed: BTreeSet<TileId> = set
                .streams()
                .filter(|s| classes.contains(&s.var.class) && s.values()[day])
                .map(|s| s.var.tile)
                .collect();
            TuningDay {
                day,
                predicted: tiles.into_iter().collect(),
                observed: observed.into_iter().collect(),
            }
        })
        .collect();
    let cands = cfg.evaluate.sigma_km.clone().unwrap_or_else(|| sigma_grid(&set.grid));
    let choice = tune_sigma(&days, &set.grid, &cands, cfg.evaluate.coverage)?;
    let maps = predicted_tiles(records.iter(), &classes)
        .into_iter()
        .map(|(day, tiles)| risk_map(day, &tiles.into_iter().collect::<Vec<_>>(), &set.grid, choice.sigma_km))
        .collect::<Result<Vec<_>>>()?;
    ctx.write_json("sigma.json", &serde_json::to_value(&choice).expect("serializes"))?;
    ctx.write_csv("riskmap.csv", |b| write_riskmap_csv(b, &maps, &set.grid, &set.window))?;
    if cfg.evaluate.geojson {
        for m in &maps {
            let name = format!("geojson/{}.geojson", set.window.date_of(m.day));
            ctx.write_json(&name, &riskmap_geojson(m, &set.grid, &set.window))?;
        }
    }
    Ok(())
}

fn perturb(ctx: &mut Ctx) -> Result<()> {
    let set = ctx.stream_set()?;
    let net = ctx.net()?;
    let models = ctx.models()?;
    let cfg = ctx.cfg;
    let surface = sweep_surface(&models, &net, &set, cfg.ensemble.horizon, &cfg.perturb.surface)?;
    ctx.write_csv("surface.csv", |b| write_surface_csv(b, &surface))?;
    ctx.write_csv("tile_response.csv", |b| write_tile_response_csv(b, &surface, &set.grid))?;
    let signs = sign_pattern(&surface);
    ctx.write_csv("signs.csv", |b| write_sign_csv(b, &signs))?;
    let [a, b] = cfg.perturb.regression_cell;
    let class = cfg.regression_class();
    let cell = surface
        .cell(a, b)
        .ok_or_else(|| Error::Config(format!("regression cell ({a}, {b}) is not on the perturbation grid")))?;
    let tiles: BTreeMap<TileId, f64> = match &cell.response {
        Some(r) => r.tiles_of(class).into_iter().map(|(t, m)| (t, m.mean)).collect(),
        None => BTreeMap::new(),
    };
    let mut summary = json!({
        "cells": surface.cells.len(),
        "invalid_cells": surface.cells.iter().filter(|c| c.response.is_none()).count(),
        "regression_class": class.name(),
        "tiles_positive": tiles.values().filter(|&&v| v > 0.0).count(),
        "tiles_negative": tiles.values().filter(|&&v| v < 0.0).count(),
        "city_response": cell.response.as_ref().and_then(|r| r.class(class)).map(|c| c.change.mean),
    });
    if let (Some(ses_p), Some(reg_p)) = (&cfg.paths.ses, &cfg.paths.regions) {
        let ses_path = ctx.raw(ses_p)?;
        let reg_path = ctx.raw(reg_p)?;
        let ses = parse_ses_table(&ses_path)?;
        let regions = Regions::read(&reg_path)?;
        let join = regions.join_tiles(&set.grid, tiles.keys().copied());
        ctx.write_csv("tile_regions.csv", |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["tile_row", "tile_col", "region_id"])?;
            for (t, id) in &join {
                let (r, c) = set.grid.row_col(*t);
                w.write_record([r.to_string(), c.to_string(), id.clone()])?;
            }
            w.flush()?;
            Ok(())
        })?;
        match ses_regression(&tiles, &join, &ses) {
            Ok(rep) => {
                ctx.write_csv("regression.csv", |b| write_regression_csv(b, &rep))?;
                let mut txt = Vec::new();
                write_regression_text(&mut txt, &rep, &format!("{} response", class.name())).map_err(|e| Error::io("regression.txt", e))?;
                ctx.write("regression.txt", &txt)?;
                summary["regression"] = serde_json::to_value(&rep).expect("serializes");
            }
            Err(Error::InsufficientData(why)) => {
                log::warn!("SES regression skipped: {why}");
                summary["regression_skipped"] = json!(why);
            }
            Err(e) => return Err(e),
        }
    }
    ctx.write_json("summary.json", &summary)
}

fn diffusion(ctx: &mut Ctx) -> Result<()> {
    let net = ctx.net()?;
    let classes: BTreeSet<EventClass> = net.vars.iter().map(|v| v.class).collect();
    ctx.write_csv("diffusion.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["class", "delay", "edges", "rate"])?;
        for &c in &classes {
            let counts = delay_counts(&net, c);
            let rate = diffusion_profile(&net, c, DiffusionNorm::default());
            for (k, (n, r)) in counts.iter().zip(&rate).enumerate() {
                w.write_record([c.name().to_string(), k.to_string(), n.to_string(), f6(*r)])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let radii = net
        .vars
        .iter()
        .map(|&v| influence_radius(&net, v, net.max_delay).map(|r| (v, r)))
        .collect::<Result<Vec<_>>>()?;
    ctx.write_csv("influence.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["tile_row", "tile_col", "class", "radius_km", "isolated"])?;
        for (v, r) in &radii {
            let (row, col) = net.grid.row_col(v.tile);
            w.write_record([row.to_string(), col.to_string(), v.class.name().to_string(), f6(r.km), (r.isolated as u8).to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn read_json(ctx: &mut Ctx, stage: Stage, file: &str) -> Result<Value> {
    let b = ctx.read(stage, file)?;
    serde_json::from_slice(&b).map_err(|e| Error::Format(format!("{stage}/{file}: {e}")))
}

fn report(ctx: &mut Ctx) -> Result<()> {
    let q = read_json(ctx, Stage::Quantize, "summary.json")?;
    let s = read_json(ctx, Stage::Sweep, "summary.json")?;
    let p = read_json(ctx, Stage::Predict, "summary.json")?;
    let e = read_json(ctx, Stage::Evaluate, "summary.json")?;
    let sigma = read_json(ctx, Stage::Riskmap, "sigma.json")?;
    let pt = read_json(ctx, Stage::Perturb, "summary.json")?;
    let auc = ctx.read(Stage::Evaluate, "auc.csv")?;
    let signs = ctx.read(Stage::Perturb, "signs.csv")?;
    ctx.read(Stage::Diffusion, "diffusion.csv")?;

    let mut tile_aucs = Vec::new();
    for rec in csv::Reader::from_reader(&auc[..]).records() {
        let rec = rec.map_err(|e| Error::Format(format!("auc.csv: {e}")))?;
        if &rec[0] == "tile_class" {
            if let Ok(a) = rec[6].parse::<f64>() {
                tile_aucs.push(a);
            }
        }
    }
    let mut hist = [0usize; 20];
    for a in &tile_aucs {
        hist[((a * 20.0) as usize).min(19)] += 1;
    }
    ctx.write_csv("auc_hist.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["auc_lo", "auc_hi", "count"])?;
        for (i, n) in hist.iter().enumerate() {
            w.write_record([format!("{:.2}", i as f64 / 20.0), format!("{:.2}", (i + 1) as f64 / 20.0), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let num = |v: &Value| v.as_f64().map(f6).unwrap_or_else(|| "n/a".into());
    let mut t = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(t, "grid: {} x {} tiles, {} kept", q["rows"], q["cols"], q["tiles_kept"]);
    let _ = writeln!(t, "days: {} training, {} holdout", q["train_days"], q["holdout_days"]);
    let _ = writeln!(
        t,
        "sweep: {} variables, {} models attempted (bound {}), {} edges retained",
        s["variables"], s["attempted"], s["bound"], s["retained"]
    );
    let _ = writeln!(t, "predictions: {} records, {} fallback variables", p["records"], p["fallback_variables"]);
    let _ = writeln!(t, "pooled AUC: {} (training-rate baseline {})", num(&e["pooled_auc"]), num(&e["baseline_pooled_auc"]));
    let _ = writeln!(
        t,
        "tile/class AUC: mean {}, median {} over {} groups",
        num(&e["tile_class_auc_mean"]),
        num(&e["tile_class_auc_median"]),
        e["tile_class_auc_count"]
    );
    let _ = writeln!(t, "median TPR at FPR <= 0.2: {}", num(&e["median_tpr_at_fpr_0.2"]));
    let _ = writeln!(t, "risk-map kernel width: {} km", num(&sigma["sigma_km"]));
    let _ = writeln!(
        t,
        "perturbation: {} cells ({} invalid); {} response at the regression cell {}",
        pt["cells"],
        pt["invalid_cells"],
        pt["regression_class"].as_str().unwrap_or("?"),
        num(&pt["city_response"])
    );
    let _ = writeln!(t, "sign pattern (output <- input: sign):");
    for rec in csv::Reader::from_reader(&signs[..]).records() {
        let rec = rec.map_err(|e| Error::Format(format!("signs.csv: {e}")))?;
        let _ = writeln!(t, "  {} <- {}: {}", &rec[0], &rec[1], &rec[4]);
    }
    if let Some(slopes) = pt["regression"]["slopes"].as_array() {
        let _ = writeln!(t, "SES regression (R^2 {}):", num(&pt["regression"]["r_squared"]));
        for c in slopes {
            let _ = writeln!(t, "  {:<16} {} (se {})", c["name"].as_str().unwrap_or("?"), num(&c["estimate"]), num(&c["stderr"]));
        }
    }
    ctx.write("summary.txt", t.as_bytes())?;
    ctx.write_json(
        "summary.json",
        &json!({ "quantize": q, "sweep": s, "predict": p, "evaluate": e, "riskmap": sigma, "perturb": pt }),
    )
}

/// The report text of a completed run.
pub fn report_text(cfg: &RunConfig) -> Result<String> {
    let p = cfg.output_dir().join("report").join("summary.txt");
    std::fs::read_to_string(&p).map_err(|e| Error::io(p, e))
}
