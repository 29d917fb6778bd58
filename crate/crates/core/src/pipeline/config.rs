use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};
use crate::evaluate::HitWindow;
use crate::ingest::{ClassAssignment, EventClass, EventClassMap, Schema};
use crate::net::SweepParams;
use crate::perturb::SurfaceParams;
use crate::quantize::{Bounds, TimeWindow};

/// Input and output locations, relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub events: PathBuf,
    #[serde(default)]
    pub ses: Option<PathBuf>,
    #[serde(default)]
    pub regions: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub schema: Schema,
    pub train_start: NaiveDate,
    pub holdout_start: NaiveDate,
    pub holdout_end: NaiveDate,
    /// Days per stream symbol. Only 1 is supported.
    #[serde(default = "one")]
    pub quantum_days: u32,
    /// Start from the schema's built-in category map.
    #[serde(default = "yes")]
    pub default_categories: bool,
    /// Raw category to class name or `ignored`; `*` catches the rest.
    #[serde(default)]
    pub categories: BTreeMap<String, String>,
    /// Drop tiles active on fewer training days than this share.
    #[serde(default)]
    pub min_event_fraction: Option<f64>,
}

fn one() -> u32 {
    1
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cell_height: f64,
    pub cell_width: f64,
    /// Defaults to the extent of the classified events.
    #[serde(default)]
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub hit_window: HitWindow,
    /// Kernel widths tried for the risk maps; defaults to a grid over tile widths.
    pub sigma_km: Option<Vec<f64>>,
    /// Share of tiles flagged when scoring a kernel width.
    pub coverage: f64,
    /// Trailing training days used to tune the kernel width.
    pub tune_days: usize,
    /// Write a GeoJSON file per holdout day.
    pub geojson: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            hit_window: HitWindow::default(),
            sigma_km: None,
            coverage: 0.1,
            tune_days: 60,
            geojson: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub surface: SurfaceParams,
    /// Cell whose per-tile responses feed the SES regression.
    pub regression_cell: [f64; 2],
    /// Output class regressed; defaults to the schema's count class.
    pub regression_class: Option<EventClass>,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            surface: SurfaceParams::default(),
            regression_cell: [0.10, 0.10],
            regression_class: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub data: DataConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub sweep: SweepParams,
    pub ensemble: EnsembleParams,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub perturb: PerturbConfig,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Directory the relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.base_dir = base_dir.to_path_buf();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_toml(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.quantum_days != 1 {
            return Err(Error::Config(format!("quantum_days = {}: only daily streams are supported", d.quantum_days)));
        }
        if d.holdout_start <= d.train_start {
            return Err(Error::Config("training must end before the holdout starts".into()));
        }
        TimeWindow::new(d.train_start, d.holdout_start, d.holdout_end).map_err(|e| Error::Config(e.to_string()))?;
        self.category_map()?;
        self.sweep.xpfsa.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.ensemble.boost.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.perturb.surface.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.ensemble.horizon == 0 || self.ensemble.horizon > self.sweep.max_delay {
            return Err(Error::Config(format!(
                "horizon {} must lie in [1, max_delay = {}]",
                self.ensemble.horizon, self.sweep.max_delay
            )));
        }
        if !(self.evaluate.coverage > 0.0 && self.evaluate.coverage <= 1.0) {
            return Err(Error::Config("evaluate.coverage must be in (0, 1]".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> Result<TimeWindow> {
        TimeWindow::new(self.data.train_start, self.data.holdout_start, self.data.holdout_end)
    }

    pub fn category_map(&self) -> Result<EventClassMap> {
        let schema = self.data.schema;
        let mut m = if self.data.default_categories {
            EventClassMap::default_for(schema)
        } else {
            EventClassMap::empty(schema)
        };
        for (cat, class) in &self.data.categories {
            let a = if class.eq_ignore_ascii_case("ignored") {
                ClassAssignment::Ignored
            } else {
                ClassAssignment::Class(class.parse()?)
            };
            m.insert_checked(cat, a)?;
        }
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.paths.output)
    }

    pub fn regression_class(&self) -> EventClass {
        self.perturb.regression_class.unwrap_or(self.data.schema.count_class())
    }

    /// Hash of everything that affects results. Thread count and the sweep
    /// budget are left out: neither changes any output.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        c.sweep.max_models = None;
        c.paths.output = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[paths]
events = "events.csv"
output = "out"

[data]
schema = "crime"
train_start = "2015-01-01"
holdout_start = "2017-01-01"
holdout_end = "2017-03-31"

[grid]
cell_height = 0.00276
cell_width = 0.0035

[ensemble.boost]
seed = 42
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(c.sweep.max_delay, 60);
        assert_eq!(c.ensemble.horizon, 7);
        assert_eq!(c.evaluate.hit_window, HitWindow { before: 1, after: 1 });
        assert_eq!(c.perturb.surface.replicates, 20);
        assert_eq!(c.output_dir(), PathBuf::from("/data/out"));
        assert_eq!(c.regression_class(), EventClass::Arrests);
    }

    #[test]
    fn hash_ignores_threads_and_budget_only() {
        let a = RunConfig::from_toml(MINIMAL, Path::new("/x")).unwrap();
        let mut b = a.clone();
        b.threads = Some(3);
        b.sweep.max_models = Some(10);
        assert_eq!(a.hash(), b.hash());
        b.sweep.gamma_min = 0.2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = MINIMAL.replace("holdout_start = \"2017-01-01\"", "holdout_start = \"2014-01-01\"");
        assert!(matches!(RunConfig::from_toml(&bad, Path::new(".")), Err(Error::Config(_))));
        let bad = format!("{MINIMAL}\n[sweep]\nmax_delay = 3\n");
        assert!(RunConfig::from_toml(&bad, Path::new(".")).is_err());
        let bad = MINIMAL.replace("schema = \"crime\"", "schema = \"crime\"\nquantum_days = 7");
        assert!(RunConfig::from_toml(&bad, Path::new(".")).is_err());
        let bad = format!("{MINIMAL}\n[typo]\nx = 1\n");
        assert!(RunConfig::from_toml(&bad, Path::new(".")).is_err());
        let bad = MINIMAL.replace("schema = \"crime\"", "schema = \"crime\"\ncategories = { THEFT = \"arrests\" }");
        assert!(RunConfig::from_toml(&bad, Path::new(".")).is_err());
    }
}
