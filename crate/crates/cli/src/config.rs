//! Pipeline configuration: one TOML (or JSON) document covering every stage.
//! Unknown keys are rejected and every section is validated at load time.

use std::path::{Path, PathBuf};

use dno_core::dno::{ModelSpec, TrainConfig};
use dno_core::incremental::{IncrementalSchedule, RouteStrategy};
use dno_core::oracle::{BarModel, DEFAULT_LAYOUT_SEED};
use dno_core::signal::GpLoadParams;
use dno_core::TimeGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset_build::Target;
use crate::error::{CliError, Context, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: TimeGrid,
    /// `seed` is the base from which every load seed is derived.
    pub gp: GpLoadParams,
    pub loads: LoadsConfig,
    pub bar: BarConfig,
    pub dataset: DatasetConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub incremental: IncrementalConfig,
    pub sweep: SweepConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: TimeGrid::default(),
            gp: GpLoadParams::default(),
            loads: LoadsConfig::default(),
            bar: BarConfig::default(),
            dataset: DatasetConfig::default(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            incremental: IncrementalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadsConfig {
    pub count: usize,
}

impl Default for LoadsConfig {
    fn default() -> Self {
        LoadsConfig { count: 5000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarConfig {
    /// Layout file; when absent a random two-material layout is generated.
    pub path: Option<PathBuf>,
    pub n_segments: usize,
    pub n_steel: usize,
    pub layout_seed: u64,
}

impl Default for BarConfig {
    fn default() -> Self {
        BarConfig {
            path: None,
            n_segments: 10,
            n_steel: 27,
            layout_seed: DEFAULT_LAYOUT_SEED,
        }
    }
}

impl BarConfig {
    pub fn build(&self) -> Result<BarModel> {
        match &self.path {
            Some(p) => BarModel::load(p).context(|| format!("reading bar layout {}", p.display())),
            None => BarModel::random_layout(self.n_segments, self.n_steel, self.layout_seed)
                .map_err(|e| CliError::config(e.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// `force`, `element:<id>` or `elements`.
    pub target: String,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            target: "force".into(),
            train_fraction: 0.98,
            split_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncrementalConfig {
    /// `default`, `similarity` or `explicit:FILE`.
    pub route: String,
    pub schedule: IncrementalSchedule,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        IncrementalConfig {
            route: "default".into(),
            schedule: IncrementalSchedule::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub archs: Vec<String>,
    pub batches: Vec<usize>,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Loss threshold of the training-mode benchmark.
    pub mode_threshold: f64,
    /// Per-run wall-time cap of the benchmark, seconds.
    pub mode_cap_secs: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sizes: vec![100, 300, 1000],
            archs: vec!["200".into(), "200x3".into()],
            batches: vec![64],
            betas: vec![0.0, 0.05, 0.1, 0.2],
            seeds: vec![0, 1, 2],
            mode_threshold: 5e-3,
            mode_cap_secs: None,
        }
    }
}

/// Parses `default`, `similarity` or `explicit:FILE` (a JSON array of ids).
pub fn parse_route(s: &str) -> Result<RouteStrategy> {
    match s {
        "default" => Ok(RouteStrategy::Default),
        "similarity" => Ok(RouteStrategy::Similarity),
        _ => match s.strip_prefix("explicit:") {
            Some(file) => {
                let text = std::fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
                let ids: Vec<usize> = serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("route file {file}: {e}")))?;
                Ok(RouteStrategy::Explicit(ids))
            }
            None => Err(CliError::config(format!(
                "unknown route `{s}` (expected default, similarity or explicit:FILE)"
            ))),
        },
    }
}

impl PipelineConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        } else {
            Self::from_toml(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Replaces every seed (loads, split, model, training) with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.gp.seed = seed;
        self.dataset.split_seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |section: &str, e: dno_core::Error| CliError::config(format!("[{section}] {e}"));
        self.grid.validate().map_err(|e| bad("grid", e))?;
        self.gp.validate().map_err(|e| bad("gp", e))?;
        if self.loads.count == 0 {
            return Err(CliError::config("[loads] count must be positive"));
        }
        if self.bar.path.is_none() {
            BarModel::random_layout(self.bar.n_segments, self.bar.n_steel, self.bar.layout_seed)
                .map_err(|e| bad("bar", e))?;
        }
        let target: Target = self.dataset.target.parse()?;
        if let Target::Element(id) = target {
            if self.bar.path.is_none() && id >= self.bar.n_segments * 4 {
                return Err(CliError::config(format!("[dataset] element {id} is not in the bar")));
            }
        }
        if !(self.dataset.train_fraction > 0.0 && self.dataset.train_fraction <= 1.0) {
            return Err(CliError::config("[dataset] train_fraction must be in (0, 1]"));
        }
        if self.model.latent == 0 {
            return Err(CliError::config("[model] latent must be positive"));
        }
        self.train.validate().map_err(|e| bad("train", e))?;
        self.incremental.schedule.validate().map_err(|e| bad("incremental", e))?;
        if !["default", "similarity"].contains(&self.incremental.route.as_str())
            && !self.incremental.route.starts_with("explicit:")
        {
            return Err(CliError::config(format!("[incremental] unknown route `{}`", self.incremental.route)));
        }
        for a in &self.sweep.archs {
            a.parse::<dno_core::dno::Architecture>().map_err(|e| bad("sweep", e))?;
        }
        if self.sweep.betas.iter().any(|b| !(*b >= 0.0)) {
            return Err(CliError::config("[sweep] noise levels must be non-negative"));
        }
        if self.sweep.batches.contains(&0) || self.sweep.sizes.contains(&0) {
            return Err(CliError::config("[sweep] sizes and batches must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(&json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = PipelineConfig::from_toml("[loads]\ncount = 10\n[train]\nmax_iterations = 100\n").unwrap();
        assert_eq!(c.loads.count, 10);
        assert_eq!(c.train.max_iterations, 100);
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.incremental.schedule.passes, 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("[loads]\ncount = 10\ncolour = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[nonsense]\n").is_err());
        assert!(PipelineConfig::from_toml("[incremental.schedule]\nfirst_element_iters = 5\nbogus = 1\n").is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = PipelineConfig::default();
        c.train.batch_size = 0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = PipelineConfig::default();
        c.dataset.target = "element:40".into();
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.sweep.archs = vec!["0x3".into()];
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_override_touches_every_seed() {
        let mut c = PipelineConfig::default();
        c.override_seed(77);
        assert_eq!(
            (c.gp.seed, c.dataset.split_seed, c.model.seed, c.train.seed),
            (77, 77, 77, 77)
        );
    }
}
