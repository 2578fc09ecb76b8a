//! End-to-end pipeline under one run root:
//! `loads/`, `sims/`, `datasets/<target>/`, `models/<target>/`, `reports/<target>/`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dno_core::dno::DnoModel;

use crate::config::{hash_json, parse_route, PipelineConfig};
use crate::dataset_build::{dataset_build, read_pairs, Target};
use crate::error::{CliError, Context, Result};
use crate::manifest::{key_of, RunManifest};
use crate::stages::{evaluate_elements, evaluate_to, generate_gp, read_split, reset_dir, simulate_dir, train_incremental_dir, train_model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    Simulate,
    Dataset,
    Train,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Generate, Stage::Simulate, Stage::Dataset, Stage::Train, Stage::Evaluate];

    /// Comma-separated list; `all` for every stage, empty or `none` for none.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Vec::new());
        }
        if s == "all" {
            return Ok(Stage::ALL.to_vec());
        }
        let mut v = s.split(',').map(|p| p.trim().parse()).collect::<Result<Vec<Stage>>>()?;
        v.sort();
        v.dedup();
        Ok(v)
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "generate" => Stage::Generate,
            "simulate" => Stage::Simulate,
            "dataset" => Stage::Dataset,
            "train" => Stage::Train,
            "evaluate" => Stage::Evaluate,
            _ => return Err(CliError::config(format!("unknown stage `{s}`"))),
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Generate => "generate",
            Stage::Simulate => "simulate",
            Stage::Dataset => "dataset",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub force: bool,
    pub workers: usize,
    pub command_line: Vec<String>,
    /// Print progress notices to stderr.
    pub verbose: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            force: false,
            workers: default_workers(),
            command_line: Vec::new(),
            verbose: false,
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub dir: PathBuf,
    pub skipped: bool,
}

/// Fixed directory layout of a run root.
pub struct RunLayout {
    pub root: PathBuf,
    pub target: Target,
}

impl RunLayout {
    pub fn new(root: &Path, target: Target) -> Self {
        RunLayout {
            root: root.to_path_buf(),
            target,
        }
    }

    fn slug(&self) -> String {
        match self.target {
            Target::Force => "force".into(),
            Target::Element(id) => format!("element_{id:02}"),
            Target::Elements => "elements".into(),
        }
    }

    pub fn loads(&self) -> PathBuf {
        self.root.join("loads")
    }

    pub fn sims(&self) -> PathBuf {
        self.root.join("sims")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("datasets").join(self.slug())
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models").join(self.slug())
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports").join(self.slug())
    }
}

fn upstream_key(dir: &Path, what: &str) -> Result<String> {
    RunManifest::read(dir)
        .map(|m| m.content_key())
        .map_err(|_| CliError::missing(dir, format!("run the {what} stage first")))
}

/// Runs `stages` in pipeline order. A stage whose directory holds a manifest
/// with the same input key and intact outputs is skipped unless forced.
/// An empty stage list only validates the configuration.
pub fn run_pipeline(cfg: &PipelineConfig, stages: &[Stage], root: &Path, opts: &RunOptions) -> Result<Vec<StageOutcome>> {
    cfg.validate()?;
    let target: Target = cfg.dataset.target.parse()?;
    let layout = RunLayout::new(root, target);
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    let mut outcomes = Vec::new();
    let notice = |msg: String| {
        if opts.verbose {
            eprintln!("{msg}");
        }
    };

    for stage in stages {
        let (dir, key) = match stage {
            Stage::Generate => (
                layout.loads(),
                key_of(&["generate", &hash_json(&cfg.grid), &hash_json(&cfg.gp), &cfg.loads.count.to_string()]),
            ),
            Stage::Simulate => {
                let bar = cfg.bar.build()?;
                (
                    layout.sims(),
                    key_of(&["simulate", &upstream_key(&layout.loads(), "generate")?, &bar.layout_hash()]),
                )
            }
            Stage::Dataset => (
                layout.dataset(),
                key_of(&[
                    "dataset",
                    &upstream_key(&layout.loads(), "generate")?,
                    &upstream_key(&layout.sims(), "simulate")?,
                    &target.to_string(),
                    &hash_json(&(cfg.dataset.train_fraction, cfg.dataset.split_seed)),
                ]),
            ),
            Stage::Train => {
                let recipe = match target {
                    Target::Elements => hash_json(&(&cfg.model, &cfg.train, &cfg.incremental)),
                    _ => hash_json(&(&cfg.model, &cfg.train)),
                };
                (
                    layout.models(),
                    key_of(&["train", &upstream_key(&layout.dataset(), "dataset")?, &recipe]),
                )
            }
            Stage::Evaluate => (
                layout.reports(),
                key_of(&[
                    "evaluate",
                    &upstream_key(&layout.models(), "train")?,
                    &upstream_key(&layout.dataset(), "dataset")?,
                ]),
            ),
        };

        if !opts.force && RunManifest::is_current(&dir, &key) {
            notice(format!("{stage}: up to date, skipping ({})", dir.display()));
            outcomes.push(StageOutcome {
                stage,
                dir,
                skipped: true,
            });
            continue;
        }
        notice(format!("{stage}: running ({})", dir.display()));
        reset_dir(&dir)?;
        let mut manifest = RunManifest::new(&stage.to_string(), &opts.command_line, cfg, key);
        match stage {
            Stage::Generate => {
                manifest.seeds = generate_gp(cfg, cfg.loads.count, &dir, opts.workers)?;
            }
            Stage::Simulate => {
                let bar = cfg.bar.build()?;
                simulate_dir(&bar, &layout.loads(), &dir, opts.workers, None)?;
                manifest.bar_hash = Some(bar.layout_hash());
            }
            Stage::Dataset => {
                let seeds = RunManifest::read(&layout.loads())?.seeds;
                let pairs = read_pairs(&layout.loads(), &layout.sims())?;
                let bar = dno_core::oracle::BarModel::load(&layout.sims().join("bar.json"))
                    .context(|| "reading sims/bar.json".into())?;
                dataset_build(
                    &pairs,
                    Some(&bar),
                    target,
                    cfg.dataset.train_fraction,
                    cfg.dataset.split_seed,
                    &seeds,
                    &dir,
                )?;
                manifest.bar_hash = Some(bar.layout_hash());
                manifest.seeds = BTreeMap::from([("split".to_string(), cfg.dataset.split_seed)]);
            }
            Stage::Train => {
                manifest.seeds = BTreeMap::from([
                    ("model".to_string(), cfg.model.seed),
                    ("train".to_string(), cfg.train.seed),
                ]);
                if target == Target::Elements {
                    let route = parse_route(&cfg.incremental.route)?;
                    train_incremental_dir(cfg, &layout.dataset(), &route, &dir)?;
                } else {
                    let data = read_split(&layout.dataset())?;
                    manifest.dataset_hashes = dataset_hashes(&data);
                    train_model(cfg, &data, &dir.join("model.json"))?;
                }
            }
            Stage::Evaluate => {
                if target == Target::Elements {
                    evaluate_elements(&layout.models(), &layout.dataset(), &dir)?;
                } else {
                    let data = read_split(&layout.dataset())?;
                    let p = layout.models().join("model.json");
                    let model = DnoModel::load(&p).context(|| format!("reading {}", p.display()))?;
                    manifest.dataset_hashes = dataset_hashes(&data);
                    evaluate_to(&model, &p.display().to_string(), &data, &dir)?;
                }
            }
        }
        manifest.finish(&dir)?;
        outcomes.push(StageOutcome {
            stage,
            dir,
            skipped: false,
        });
    }
    Ok(outcomes)
}

pub fn dataset_hashes(data: &dno_core::dno::SplitDataset) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("train".to_string(), data.manifest.train_hash.clone()),
        ("test".to_string(), data.manifest.test_hash.clone()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_lists() {
        assert!(Stage::parse_list("").unwrap().is_empty());
        assert!(Stage::parse_list("none").unwrap().is_empty());
        assert_eq!(Stage::parse_list("all").unwrap(), Stage::ALL.to_vec());
        assert_eq!(
            Stage::parse_list("train,generate,train").unwrap(),
            vec![Stage::Generate, Stage::Train]
        );
        assert_eq!(Stage::parse_list("fly").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn empty_stage_set_only_validates() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(&PipelineConfig::default(), &[], dir.path(), &RunOptions::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
        let mut bad = PipelineConfig::default();
        bad.loads.count = 0;
        assert_eq!(
            run_pipeline(&bad, &[], dir.path(), &RunOptions::default()).unwrap_err().exit_code(),
            2
        );
    }

    #[test]
    fn downstream_without_upstream_is_a_dependency_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = run_pipeline(&PipelineConfig::default(), &[Stage::Train], dir.path(), &RunOptions::default()).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
