//! The Granger net: every retained (source, target, delay) machine, indexed
//! by target, plus network-level queries.

mod store;
mod sweep;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use store::{read_net, write_edge_csv, write_net, EDGE_CSV_HEADER};
pub use sweep::{model_bound, run_sweep, sweep, SweepLog};

use crate::error::{Error, Result};
use crate::ingest::EventClass;
use crate::quantize::{TileGrid, TileId, VarId};
use crate::xpfsa::{Xpfsa, XpfsaParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey {
    pub source: VarId,
    pub target: VarId,
    pub delay: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrangerEdge {
    pub key: EdgeKey,
    pub machine: Xpfsa,
}

impl GrangerEdge {
    pub fn gamma(&self) -> f64 {
        self.machine.gamma()
    }
}

/// Which side of `gamma_min` keeps an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retain {
    #[default]
    AtLeast,
    AtMost,
}

impl Retain {
    pub fn keeps(self, gamma: f64, gamma_min: f64) -> bool {
        match self {
            Retain::AtLeast => gamma >= gamma_min,
            Retain::AtMost => gamma <= gamma_min,
        }
    }

    fn code(self) -> u8 {
        match self {
            Retain::AtLeast => 0,
            Retain::AtMost => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Retain::AtLeast),
            1 => Some(Retain::AtMost),
            _ => None,
        }
    }
}

/// Restricts which sources are tried for each target. Off by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateFilter {
    /// Source tile centre within this many km of the target tile centre.
    MaxDistanceKm(f64),
    /// Source training rate at least this value.
    MinSourceActivity(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub max_delay: u32,
    pub xpfsa: XpfsaParams,
    pub gamma_min: f64,
    pub retain: Retain,
    pub filter: Option<CandidateFilter>,
    /// Stop with a resumable checkpoint once this many models were attempted
    /// in one run.
    pub max_models: Option<u64>,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            max_delay: 60,
            xpfsa: XpfsaParams::default(),
            gamma_min: 0.01,
            retain: Retain::AtLeast,
            filter: None,
            max_models: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrangerNet {
    pub grid: TileGrid,
    /// Every variable of the swept stream set, sorted.
    pub vars: Vec<VarId>,
    pub max_delay: u32,
    pub depth: usize,
    pub gamma_min: f64,
    pub retain: Retain,
    pub attempted: u64,
    /// Retained edges per target, sorted by gamma descending then (source, delay).
    in_edges: BTreeMap<VarId, Vec<GrangerEdge>>,
}

pub(crate) fn sort_edges(edges: &mut [GrangerEdge]) {
    edges.sort_by(|a, b| {
        b.gamma()
            .total_cmp(&a.gamma())
            .then(a.key.source.cmp(&b.key.source))
            .then(a.key.delay.cmp(&b.key.delay))
    });
}

impl GrangerNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: TileGrid,
        mut vars: Vec<VarId>,
        max_delay: u32,
        depth: usize,
        gamma_min: f64,
        retain: Retain,
        attempted: u64,
        edges: impl IntoIterator<Item = GrangerEdge>,
    ) -> Self {
        vars.sort();
        vars.dedup();
        let mut in_edges: BTreeMap<VarId, Vec<GrangerEdge>> = vars.iter().map(|&v| (v, Vec::new())).collect();
        for e in edges {
            in_edges.entry(e.key.target).or_default().push(e);
        }
        for list in in_edges.values_mut() {
            sort_edges(list);
        }
        GrangerNet {
            grid,
            vars,
            max_delay,
            depth,
            gamma_min,
            retain,
            attempted,
            in_edges,
        }
    }

    pub fn retained(&self) -> u64 {
        self.in_edges.values().map(|v| v.len() as u64).sum()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.in_edges.contains_key(&var)
    }

    pub fn in_edges(&self, target: VarId) -> Result<&[GrangerEdge]> {
        self.in_edges
            .get(&target)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownVariable(target.to_string()))
    }

    pub fn edges(&self) -> impl Iterator<Item = &GrangerEdge> {
        self.in_edges.values().flatten()
    }

    pub fn targets(&self) -> impl Iterator<Item = VarId> + '_ {
        self.in_edges.keys().copied()
    }

    /// Copy with the retention threshold raised to `gamma_min`.
    pub fn restrict(&self, gamma_min: f64) -> GrangerNet {
        let edges = self.edges().filter(|e| self.retain.keeps(e.gamma(), gamma_min)).cloned();
        GrangerNet::new(
            self.grid,
            self.vars.clone(),
            self.max_delay,
            self.depth,
            gamma_min,
            self.retain,
            self.attempted,
            edges.collect::<Vec<_>>(),
        )
    }
}

/// Tiles owning a retained edge into `target` with delay at most `max_delay`.
pub fn neighborhood(net: &GrangerNet, target: VarId, max_delay: u32) -> Result<BTreeSet<TileId>> {
    Ok(net
        .in_edges(target)?
        .iter()
        .filter(|e| e.key.delay <= max_delay)
        .map(|e| e.key.source.tile)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRadius {
    pub km: f64,
    /// No in-edge within the horizon.
    pub isolated: bool,
}

/// Largest great-circle distance from the target tile centre to a tile of
/// its neighborhood at horizon `max_delay`.
pub fn influence_radius(net: &GrangerNet, target: VarId, max_delay: u32) -> Result<InfluenceRadius> {
    let hood = neighborhood(net, target, max_delay)?;
    if hood.is_empty() {
        return Ok(InfluenceRadius { km: 0.0, isolated: true });
    }
    let km = hood
        .iter()
        .map(|&t| net.grid.center_distance_km(target.tile, t))
        .fold(0.0, f64::max);
    Ok(InfluenceRadius { km, isolated: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionNorm {
    /// Divide by the delay-0 count; falls back to the total when that is zero.
    #[default]
    ZeroDelay,
    Total,
}

/// Retained edges sourced from `class`, counted per delay `0..=max_delay`.
pub fn delay_counts(net: &GrangerNet, class: EventClass) -> Vec<u64> {
    let mut counts = vec![0u64; net.max_delay as usize + 1];
    for e in net.edges().filter(|e| e.key.source.class == class) {
        counts[e.key.delay as usize] += 1;
    }
    counts
}

pub fn diffusion_rate(net: &GrangerNet, class: EventClass, delay: u32, norm: DiffusionNorm) -> Result<f64> {
    if delay > net.max_delay {
        return Err(Error::InvalidParam(format!(
            "delay {delay} exceeds the swept maximum {}",
            net.max_delay
        )));
    }
    Ok(diffusion_profile(net, class, norm)[delay as usize])
}

/// Normalized retained-edge counts for every delay.
pub fn diffusion_profile(net: &GrangerNet, class: EventClass, norm: DiffusionNorm) -> Vec<f64> {
    let counts = delay_counts(net, class);
    let total: u64 = counts.iter().sum();
    let denom = match norm {
        DiffusionNorm::ZeroDelay if counts[0] > 0 => counts[0],
        _ => total,
    };
    counts
        .iter()
        .map(|&c| if denom == 0 { 0.0 } else { c as f64 / denom as f64 })
        .collect()
}
