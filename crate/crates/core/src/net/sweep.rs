//! The (source, target, delay) sweep.
//!
//! Work is split by target variable. Each finished target is appended to an
//! optional log so that an interrupted or budget-limited sweep resumes where
//! it stopped. Log layout (little endian):
//!
//! ```text
//! magic "GNSWPLOG" | version u16 | fingerprint [u8; 32] | depth u8
//! { len u32 | tile u32 | class u8 | attempted u64 | n_edges u32
//!   | { src_tile u32 | src_class u8 | machine record } * n_edges } *
//! ```
//!
//! A record cut short by a crash is discarded on reopen.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{CandidateFilter, EdgeKey, GrangerEdge, GrangerNet, SweepParams};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::ingest::EventClass;
use crate::quantize::{StreamSet, TileId, VarId};
use crate::xpfsa::{collect_from_codes, infer_xpfsa, read_record, write_record, HistoryCodes};

const MAGIC: &[u8; 8] = b"GNSWPLOG";
const VERSION: u16 = 1;

/// Upper bound on inferred models: `|S|^2 * (max_delay + 1)`.
pub fn model_bound(n_vars: u64, max_delay: u32) -> u64 {
    n_vars * n_vars * (max_delay as u64 + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TargetResult {
    pub target: VarId,
    pub attempted: u64,
    pub edges: Vec<GrangerEdge>,
}

/// Append-only record of finished targets.
pub struct SweepLog {
    path: PathBuf,
    file: File,
    depth: usize,
}

fn encode_result(r: &TargetResult) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.u32(r.target.tile.0);
    w.u8(r.target.class.code());
    w.u64(r.attempted);
    w.u32(r.edges.len() as u32);
    for e in &r.edges {
        w.u32(e.key.source.tile.0);
        w.u8(e.key.source.class.code());
        write_record(&mut w, &e.machine);
    }
    w.into_inner()
}

fn read_var(r: &mut ByteReader<'_>) -> Result<VarId> {
    let tile = TileId(r.u32()?);
    let code = r.u8()?;
    let class = EventClass::from_code(code).ok_or_else(|| Error::Format(format!("class code {code}")))?;
    Ok(VarId { tile, class })
}

fn decode_result(data: &[u8], depth: usize) -> Result<TargetResult> {
    let mut r = ByteReader::new(data);
    let target = read_var(&mut r)?;
    let attempted = r.u64()?;
    let n = r.u32()? as usize;
    let mut edges = Vec::with_capacity(n);
    for _ in 0..n {
        let source = read_var(&mut r)?;
        let machine = read_record(&mut r)?;
        if machine.depth() != depth {
            return Err(Error::Format(format!("machine depth {} in a depth-{depth} log", machine.depth())));
        }
        edges.push(GrangerEdge {
            key: EdgeKey {
                source,
                target,
                delay: machine.delay() as u32,
            },
            machine,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::Format("trailing bytes in sweep log record".into()));
    }
    Ok(TargetResult { target, attempted, edges })
}

impl SweepLog {
    /// Opens or creates the log, returning the targets already finished.
    /// A log written under a different fingerprint is refused.
    pub(crate) fn open(path: &Path, fingerprint: &[u8; 32], depth: usize) -> Result<(Self, Vec<TargetResult>)> {
        let io = |e| Error::io(path, e);
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(io)?;
        let mut data = Vec::new();
        file.read_to_end(&mut data).map_err(io)?;
        let header_len = MAGIC.len() + 2 + 32 + 1;
        let mut done = Vec::new();
        let valid_end = if data.len() < header_len {
            // fresh (or torn before the header was complete)
            let mut w = ByteWriter::new();
            w.bytes(MAGIC);
            w.u16(VERSION);
            w.bytes(fingerprint);
            w.u8(depth as u8);
            file.set_len(0).map_err(io)?;
            file.seek(SeekFrom::Start(0)).map_err(io)?;
            file.write_all(&w.into_inner()).map_err(io)?;
            header_len
        } else {
            let mut r = ByteReader::new(&data);
            r.expect_magic(MAGIC)?;
            let version = r.u16()?;
            if version != VERSION {
                return Err(Error::Format(format!("unsupported sweep log version {version}")));
            }
            let found = r.take(32)?;
            let log_depth = r.u8()? as usize;
            if found != fingerprint || log_depth != depth {
                return Err(Error::ConfigMismatch {
                    dir: path.to_path_buf(),
                    expected: hex::encode(fingerprint),
                    found: hex::encode(found),
                });
            }
            let mut end = r.position();
            while let Ok(len) = r.u32() {
                let Ok(body) = r.take(len as usize) else { break };
                match decode_result(body, depth) {
                    Ok(res) => done.push(res),
                    Err(_) => break,
                }
                end = r.position();
            }
            if end < data.len() {
                log::warn!("{}: discarding {} bytes of incomplete log tail", path.display(), data.len() - end);
            }
            end
        };
        file.set_len(valid_end as u64).map_err(io)?;
        file.seek(SeekFrom::Start(valid_end as u64)).map_err(io)?;
        Ok((
            SweepLog {
                path: path.to_path_buf(),
                file,
                depth,
            },
            done,
        ))
    }

    pub(crate) fn append(&mut self, results: &[TargetResult]) -> Result<()> {
        let mut buf = Vec::new();
        for r in results {
            debug_assert!(r.edges.iter().all(|e| e.machine.depth() == self.depth));
            let body = encode_result(r);
            buf.extend_from_slice(&(body.len() as u32).to_le_bytes());
            buf.extend_from_slice(&body);
        }
        self.file.write_all(&buf).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))
    }
}

/// Identity of a sweep: parameters (without the budget) and training data.
fn fingerprint(set: &StreamSet, params: &SweepParams) -> [u8; 32] {
    let mut p = params.clone();
    p.max_models = None;
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&p).expect("params serialize"));
    h.update((set.train_len() as u64).to_le_bytes());
    for s in set.streams() {
        h.update(s.var.tile.0.to_le_bytes());
        h.update([s.var.class.code()]);
        let mut packed = vec![0u8; set.train_len().div_ceil(8)];
        for (i, &b) in s.values()[..set.train_len()].iter().enumerate() {
            packed[i / 8] |= (b as u8) << (i % 8);
        }
        h.update(&packed);
    }
    h.finalize().into()
}

struct Prepared<'a> {
    vars: Vec<VarId>,
    train: Vec<&'a [bool]>,
    codes: Vec<HistoryCodes>,
    rates: Vec<f64>,
}

fn candidates(set: &StreamSet, prep: &Prepared<'_>, filter: Option<CandidateFilter>, ti: usize) -> Vec<usize> {
    let target = prep.vars[ti];
    (0..prep.vars.len())
        .filter(|&si| match filter {
            None => true,
            Some(CandidateFilter::MaxDistanceKm(d)) => set.grid.center_distance_km(prep.vars[si].tile, target.tile) <= d,
            Some(CandidateFilter::MinSourceActivity(a)) => prep.rates[si] >= a,
        })
        .collect()
}

fn sweep_target(set: &StreamSet, prep: &Prepared<'_>, params: &SweepParams, ti: usize) -> Result<TargetResult> {
    let target = prep.vars[ti];
    let mut attempted = 0u64;
    let mut edges = Vec::new();
    for si in candidates(set, prep, params.filter, ti) {
        for k in 0..=params.max_delay {
            attempted += 1;
            // a variable is trivially its own zero-delay predictor
            if si == ti && k == 0 {
                continue;
            }
            let stats = collect_from_codes(&prep.codes[si], prep.train[ti], k as usize);
            let machine = infer_xpfsa(&stats, params.xpfsa.epsilon, params.xpfsa.n_min)?;
            if params.retain.keeps(machine.gamma(), params.gamma_min) {
                edges.push(GrangerEdge {
                    key: EdgeKey {
                        source: prep.vars[si],
                        target,
                        delay: k,
                    },
                    machine,
                });
            }
        }
    }
    super::sort_edges(&mut edges);
    Ok(TargetResult { target, attempted, edges })
}

/// Full in-memory sweep.
pub fn sweep(set: &StreamSet, params: &SweepParams) -> Result<GrangerNet> {
    run_sweep(set, params, None)
}

/// Sweep with an optional resumable log. With `params.max_models` set the
/// run stops with [`Error::BudgetExceeded`] once its own attempts reach the
/// budget; rerunning with the same log picks up the remaining targets.
pub fn run_sweep(set: &StreamSet, params: &SweepParams, log_path: Option<&Path>) -> Result<GrangerNet> {
    params.xpfsa.validate()?;
    if !params.gamma_min.is_finite() {
        return Err(Error::InvalidParam(format!("gamma_min must be finite, got {}", params.gamma_min)));
    }
    let depth = params.xpfsa.depth;
    let m = set.train_len();
    if m <= depth + params.max_delay as usize {
        return Err(Error::InsufficientData(format!(
            "{m} training days cannot support depth {depth} with delays up to {}",
            params.max_delay
        )));
    }
    let vars = set.vars();
    let train: Vec<&[bool]> = vars.iter().map(|&v| set.training(v).expect("listed var")).collect();
    let codes = train.par_iter().map(|t| HistoryCodes::new(t, depth)).collect();
    let rates = train
        .iter()
        .map(|t| t.iter().filter(|&&b| b).count() as f64 / m as f64)
        .collect();
    let prep = Prepared {
        vars,
        train,
        codes,
        rates,
    };

    let (mut log, done) = match log_path {
        Some(p) => {
            let (l, d) = SweepLog::open(p, &fingerprint(set, params), depth)?;
            (Some(l), d)
        }
        None => (None, Vec::new()),
    };
    let mut results: BTreeMap<VarId, TargetResult> = done.into_iter().map(|r| (r.target, r)).collect();
    if !results.is_empty() {
        log::info!("resuming sweep with {} of {} targets done", results.len(), prep.vars.len());
    }
    let pending: Vec<usize> = (0..prep.vars.len())
        .filter(|&i| !results.contains_key(&prep.vars[i]))
        .collect();

    let chunk = (rayon::current_num_threads() * 2).max(1);
    let mut spent = 0u64;
    for (ci, batch) in pending.chunks(chunk).enumerate() {
        if let Some(budget) = params.max_models {
            if spent >= budget {
                return Err(Error::BudgetExceeded {
                    completed: results.len(),
                    total: prep.vars.len(),
                    log: log_path.map(Path::to_path_buf).unwrap_or_default(),
                });
            }
        }
        let out: Vec<TargetResult> = batch
            .par_iter()
            .map(|&ti| sweep_target(set, &prep, params, ti))
            .collect::<Result<_>>()?;
        if let Some(l) = log.as_mut() {
            l.append(&out)?;
        }
        for r in out {
            spent += r.attempted;
            results.insert(r.target, r);
        }
        log::debug!("sweep batch {ci}: {} of {} targets", results.len(), prep.vars.len());
    }

    let attempted = results.values().map(|r| r.attempted).sum();
    let edges: Vec<GrangerEdge> = results.into_values().flat_map(|r| r.edges).collect();
    Ok(GrangerNet::new(
        set.grid,
        prep.vars,
        params.max_delay,
        depth,
        params.gamma_min,
        params.retain,
        attempted,
        edges,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{diffusion_profile, neighborhood, DiffusionNorm};
    use crate::synth;

    #[test]
    fn bound_arithmetic() {
        // 2205 tiles x 3 classes, 60-day horizon
        assert_eq!(model_bound(6615, 60), 2_669_251_725);
        assert_eq!(model_bound(2, 0), 4);
    }

    fn small_params() -> SweepParams {
        SweepParams {
            max_delay: 4,
            xpfsa: crate::xpfsa::XpfsaParams { depth: 2, ..Default::default() },
            gamma_min: 0.05,
            ..Default::default()
        }
    }

    #[test]
    fn two_vars_zero_delay_attempts_four() {
        let set = synth::planted_set(&synth::PlantedSpec { n_vars: 2, couplings: vec![], len: 300, ..Default::default() }, 1);
        let net = sweep(&set, &SweepParams { max_delay: 0, ..small_params() }).unwrap();
        assert_eq!(net.attempted, 4);
        assert!(net.edges().all(|e| e.key.source != e.key.target || e.key.delay > 0));
    }

    #[test]
    fn planted_lag_is_found_at_that_delay_only() {
        let spec = synth::PlantedSpec {
            n_vars: 4,
            couplings: vec![synth::Coupling { source: 0, target: 2, lag: 3, flip: 0.05 }],
            len: 4000,
            ..Default::default()
        };
        let set = synth::planted_set(&spec, 8);
        let params = SweepParams { xpfsa: crate::xpfsa::XpfsaParams { depth: 1, ..Default::default() }, ..small_params() };
        let net = sweep(&set, &params).unwrap();
        assert_eq!(net.attempted, model_bound(4, 4));
        let vars = set.vars();
        let target = vars[2];
        let hood = neighborhood(&net, target, 4).unwrap();
        assert_eq!(hood, [vars[0].tile].into_iter().collect());
        let class = vars[0].class;
        let profile = diffusion_profile(&net, class, DiffusionNorm::ZeroDelay);
        assert_eq!(profile, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        for t in [vars[0], vars[1], vars[3]] {
            assert!(neighborhood(&net, t, 4).unwrap().is_empty(), "{t}");
        }
    }

    #[test]
    fn deterministic_and_monotone() {
        let spec = synth::PlantedSpec::default();
        let set = synth::planted_set(&synth::PlantedSpec { len: 1500, ..spec }, 4);
        let a = sweep(&set, &small_params()).unwrap();
        let b = sweep(&set, &small_params()).unwrap();
        assert_eq!(a, b);
        let tighter = sweep(&set, &SweepParams { gamma_min: 0.2, ..small_params() }).unwrap();
        let keys = |n: &GrangerNet| n.edges().map(|e| e.key).collect::<std::collections::BTreeSet<_>>();
        assert!(keys(&tighter).is_subset(&keys(&a)));
        assert_eq!(tighter, a.restrict(0.2));
    }

    #[test]
    fn budget_checkpoint_resume_matches_full_run() {
        let set = synth::planted_set(&synth::PlantedSpec { len: 1200, ..Default::default() }, 5);
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("sweep.log");
        let full = sweep(&set, &small_params()).unwrap();
        let limited = SweepParams { max_models: Some(1), ..small_params() };
        let mut rounds = 0;
        let net = loop {
            rounds += 1;
            match run_sweep(&set, &limited, Some(&log)) {
                Ok(net) => break net,
                Err(Error::BudgetExceeded { completed, total, .. }) => assert!(completed < total),
                Err(e) => panic!("{e}"),
            }
            assert!(rounds < 100);
        };
        assert!(rounds > 1);
        assert_eq!(net, full);

        // a torn tail is dropped and recomputed
        let len = std::fs::metadata(&log).unwrap().len();
        let f = OpenOptions::new().write(true).open(&log).unwrap();
        f.set_len(len - 7).unwrap();
        drop(f);
        assert_eq!(run_sweep(&set, &small_params(), Some(&log)).unwrap(), full);

        // different parameters refuse the log
        let other = SweepParams { gamma_min: 0.3, ..small_params() };
        assert!(matches!(run_sweep(&set, &other, Some(&log)), Err(Error::ConfigMismatch { .. })));
    }

    #[test]
    fn candidate_filters() {
        let set = synth::planted_set(&synth::PlantedSpec { len: 600, ..Default::default() }, 2);
        let n = set.len() as u64;
        let near = sweep(&set, &SweepParams { filter: Some(CandidateFilter::MaxDistanceKm(0.0)), ..small_params() }).unwrap();
        // only same-tile sources survive a zero radius
        let per_tile = set.classes.len() as u64;
        assert_eq!(near.attempted, n * per_tile * 5);
        let none = sweep(&set, &SweepParams { filter: Some(CandidateFilter::MinSourceActivity(1.1)), ..small_params() }).unwrap();
        assert_eq!(none.attempted, 0);
        assert_eq!(none.retained(), 0);
    }

    #[test]
    fn too_short_for_the_horizon() {
        let set = synth::planted_set(&synth::PlantedSpec { len: 50, ..Default::default() }, 2);
        let p = SweepParams { max_delay: 60, ..small_params() };
        assert!(matches!(sweep(&set, &p), Err(Error::InsufficientData(_))));
    }
}
