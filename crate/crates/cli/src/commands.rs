//! Argument definitions and dispatch for the `dno` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dno_core::dno::{Architecture, CombineMode, DnoModel, TrainMode};
use dno_core::eval::{architecture_sweep, dataset_size_study, robustness_study, training_mode_benchmark};
use dno_core::incremental::StopMode;
use dno_core::oracle::BarModel;
use dno_core::signal::{fmt_f64, piecewise_linear_load, sinusoid_load};
use dno_core::{Error as CoreError, LoadSignal, TimeGrid};

use crate::config::{parse_route, PipelineConfig};
use crate::dataset_build::{dataset_build, read_pairs, Target};
use crate::error::{CliError, Context, Result};
use crate::manifest::{key_of, RunManifest};
use crate::pipeline::{dataset_hashes, default_workers, run_pipeline, RunOptions, Stage};
use crate::stages::{
    create_dir, evaluate_to, generate_gp, predict_to, read_split, sample_name, simulate_dir, train_incremental_dir,
    train_model, write_json, write_load,
};

#[derive(Parser, Debug)]
#[command(name = "dno", version, about = "Operator-network surrogate for elastoplastic composite bars")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// Pipeline configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replaces every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Threads for generate and simulate; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Rerun stages even when their outputs are up to date.
    #[arg(long, global = true)]
    pub force: bool,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize strain loads.
    Generate(GenerateArgs),
    /// Run the bar oracle on a directory of loads.
    Simulate(SimulateArgs),
    /// Pair loads with simulations into a train/test dataset.
    Dataset(DatasetArgs),
    /// Train one operator network.
    Train(TrainArgs),
    /// Train one network per material point along a route.
    TrainIncremental(IncrementalArgs),
    /// Predict the response to one load.
    Predict(PredictArgs),
    /// Score a model on a dataset's test rows.
    Evaluate(EvaluateArgs),
    /// Run a study: dataset size, architecture, noise or training mode.
    Sweep(SweepArgs),
    /// Run pipeline stages under one run root.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LoadKind {
    Gp,
    Sin,
    Pwl,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "gp")]
    pub kind: LoadKind,
    /// Grid points.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// GP standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// GP kernel coefficient, 1/s^2.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Number of GP loads.
    #[arg(long)]
    pub count: Option<usize>,
    /// Disable the sin(pi t) window on GP loads.
    #[arg(long)]
    pub no_window: bool,
    /// Sinusoid amplitude.
    #[arg(long, default_value_t = 3e-3)]
    pub amplitude: f64,
    /// Sinusoid period, s.
    #[arg(long, default_value_t = 1.0)]
    pub period: f64,
    /// Piecewise-linear knots as `t:strain,t:strain,...`.
    #[arg(long)]
    pub knots: Option<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Layout file; defaults to the configured layout.
    #[arg(long)]
    pub bar: Option<PathBuf>,
    #[arg(long)]
    pub loads: PathBuf,
    /// Segment-refinement multipliers checked on the first load, e.g. `1,2,4,8`.
    #[arg(long, value_delimiter = ',')]
    pub refine: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    #[arg(long)]
    pub loads: PathBuf,
    #[arg(long)]
    pub sims: PathBuf,
    /// `force`, `element:<id>` or `elements`.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub arch: Option<String>,
    /// `hadamard` or `dot`.
    #[arg(long)]
    pub mode: Option<String>,
    /// `seq` or `point`.
    #[arg(long)]
    pub train_mode: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Stop once the training loss reaches this value; 0 disables.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Inner-product width in dot mode.
    #[arg(long)]
    pub latent: Option<usize>,
    /// Hold out this fraction of the training rows and keep the parameters
    /// with the lowest loss on them.
    #[arg(long)]
    pub validation: Option<f64>,
    /// Log intervals without a new validation minimum before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Args, Debug)]
pub struct IncrementalArgs {
    /// Dataset built with target `elements`.
    #[arg(long)]
    pub data: PathBuf,
    /// `default`, `similarity` or `explicit:FILE`.
    #[arg(long)]
    pub route: Option<String>,
    #[arg(long)]
    pub first_iters: Option<usize>,
    #[arg(long)]
    pub rest_iters: Option<usize>,
    /// Per-element loss threshold; switches to threshold stopping.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub passes: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub load: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Size,
    Arch,
    Noise,
    Modes,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub kind: SweepKind,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Comma-separated subset of generate,simulate,dataset,train,evaluate; `all` or `none`.
    #[arg(long, default_value = "all")]
    pub stages: String,
}

fn load_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.override_seed(s);
    }
    Ok(cfg)
}

fn require_out(g: &GlobalArgs) -> Result<&Path> {
    g.out.as_deref().ok_or_else(|| CliError::config("--out is required"))
}

fn parse_core<T: std::str::FromStr<Err = CoreError>>(s: &str) -> Result<T> {
    s.parse().map_err(|e: CoreError| CliError::config(e.to_string()))
}

fn parse_knots(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|kv| {
            let (t, v) = kv
                .split_once(':')
                .ok_or_else(|| CliError::config(format!("knot `{kv}` is not t:strain")))?;
            let num = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::config(format!("knot `{kv}` is not numeric")))
            };
            Ok((num(t)?, num(v)?))
        })
        .collect()
}

/// Writes a manifest into `dir` for a standalone command.
fn stamp(dir: &Path, stage: &str, cfg: &PipelineConfig, line: &[String], fill: impl FnOnce(&mut RunManifest)) -> Result<()> {
    let mut m = RunManifest::new(stage, line, cfg, key_of(&[stage, &cfg.hash()]));
    fill(&mut m);
    m.finish(dir).map(|_| ())
}

/// Runs one parsed command line. `line` is recorded in manifests.
pub fn run(cli: Cli, line: &[String]) -> Result<()> {
    let g = &cli.global;
    let mut cfg = load_config(g)?;
    let workers = g.workers.unwrap_or_else(default_workers).max(1);
    match cli.command {
        Command::Generate(a) => {
            let out = require_out(g)?;
            if let Some(n) = a.n {
                cfg.grid.n_points = n;
            }
            if let Some(t) = a.t_end {
                cfg.grid.t_end = t;
            }
            if let Some(s) = a.sigma {
                cfg.gp.std = s;
            }
            if let Some(gm) = a.gamma {
                cfg.gp.gamma = gm;
            }
            if let Some(c) = a.count {
                cfg.loads.count = c;
            }
            if a.no_window {
                cfg.gp.window = false;
            }
            cfg.validate()?;
            let grid = TimeGrid::new(0.0, cfg.grid.t_end, cfg.grid.n_points).map_err(|e| CliError::config(e.to_string()))?;
            let seeds = match a.kind {
                LoadKind::Gp => generate_gp(&cfg, cfg.loads.count, out, workers)?,
                LoadKind::Sin => {
                    let l = sinusoid_load(&grid, a.amplitude, a.period).map_err(|e| CliError::config(e.to_string()))?;
                    write_load(&l, out, &sample_name("sin", 0))?;
                    Default::default()
                }
                LoadKind::Pwl => {
                    let knots = parse_knots(a.knots.as_deref().unwrap_or("0:0,0.5:0.003,1:0"))?;
                    let l = piecewise_linear_load(&grid, &knots).map_err(|e| CliError::config(e.to_string()))?;
                    write_load(&l, out, &sample_name("pwl", 0))?;
                    Default::default()
                }
            };
            stamp(out, "generate", &cfg, line, |m| m.seeds = seeds)
        }
        Command::Simulate(a) => {
            let out = require_out(g)?;
            let bar = match &a.bar {
                Some(p) => BarModel::load(p).context(|| format!("reading {}", p.display()))?,
                None => cfg.bar.build()?,
            };
            simulate_dir(&bar, &a.loads, out, workers, a.refine.as_deref())?;
            stamp(out, "simulate", &cfg, line, |m| m.bar_hash = Some(bar.layout_hash()))
        }
        Command::Dataset(a) => {
            let out = require_out(g)?;
            if let Some(t) = a.target {
                cfg.dataset.target = t;
            }
            if let Some(f) = a.train_fraction {
                cfg.dataset.train_fraction = f;
            }
            cfg.validate()?;
            let target: Target = cfg.dataset.target.parse()?;
            let seeds = RunManifest::read(&a.loads).map(|m| m.seeds).unwrap_or_default();
            let bar_path = a.sims.join("bar.json");
            let bar = if bar_path.exists() {
                Some(BarModel::load(&bar_path).context(|| format!("reading {}", bar_path.display()))?)
            } else {
                None
            };
            let pairs = read_pairs(&a.loads, &a.sims)?;
            dataset_build(
                &pairs,
                bar.as_ref(),
                target,
                cfg.dataset.train_fraction,
                cfg.dataset.split_seed,
                &seeds,
                out,
            )?;
            stamp(out, "dataset", &cfg, line, |m| {
                m.bar_hash = bar.map(|b| b.layout_hash());
                m.seeds.insert("split".into(), cfg.dataset.split_seed);
            })
        }
        Command::Train(a) => {
            let out = require_out(g)?.to_path_buf();
            if let Some(s) = &a.arch {
                cfg.model.arch = parse_core::<Architecture>(s)?;
            }
            if let Some(s) = &a.mode {
                cfg.model.mode = parse_core::<CombineMode>(s)?;
            }
            if let Some(s) = &a.train_mode {
                cfg.train.mode = parse_core::<TrainMode>(s)?;
            }
            if let Some(b) = a.batch {
                cfg.train.batch_size = b;
            }
            if let Some(lr) = a.lr {
                cfg.train.learning_rate = lr;
            }
            if let Some(k) = a.max_iter {
                cfg.train.max_iterations = k;
            }
            if let Some(t) = a.threshold {
                cfg.train.loss_threshold = t;
            }
            if let Some(p) = a.latent {
                cfg.model.latent = p;
            }
            if let Some(f) = a.validation {
                cfg.train.validation_fraction = f;
            }
            if a.patience.is_some() {
                cfg.train.patience = a.patience;
            }
            cfg.validate()?;
            let data = read_split(&a.data)?;
            let (_, report) = train_model(&cfg, &data, &out)?;
            eprintln!(
                "trained {} iterations, final loss {:.4e}{}",
                report.iterations,
                report.final_loss,
                if report.reached_threshold { " (threshold reached)" } else { "" }
            );
            let dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            stamp(dir, "train", &cfg, line, |m| {
                m.seeds.insert("model".into(), cfg.model.seed);
                m.seeds.insert("train".into(), cfg.train.seed);
                m.dataset_hashes = dataset_hashes(&data);
            })
        }
        Command::TrainIncremental(a) => {
            let out = require_out(g)?;
            if let Some(r) = a.route {
                cfg.incremental.route = r;
            }
            let s = &mut cfg.incremental.schedule;
            if let Some(k) = a.first_iters {
                s.first_element_iters = k;
            }
            if let Some(k) = a.rest_iters {
                s.subsequent_iters = k;
            }
            if let Some(t) = a.threshold {
                s.loss_threshold_first = t;
                s.loss_threshold_rest = t;
                s.stop_mode = StopMode::Threshold;
            }
            if let Some(p) = a.passes {
                s.passes = p;
            }
            cfg.validate()?;
            let route = parse_route(&cfg.incremental.route)?;
            let report = train_incremental_dir(&cfg, &a.data, &route, out)?;
            eprintln!(
                "trained {} elements, {} iterations in total",
                report.route.order.len(),
                report.total_iterations
            );
            stamp(out, "train-incremental", &cfg, line, |m| {
                m.seeds.insert("model".into(), cfg.model.seed);
                m.seeds.insert("train".into(), cfg.train.seed);
            })
        }
        Command::Predict(a) => {
            let out = require_out(g)?;
            let model = DnoModel::load(&a.model).context(|| format!("reading {}", a.model.display()))?;
            let load = LoadSignal::read_csv(&a.load).context(|| format!("reading {}", a.load.display()))?;
            predict_to(&model, &load, out)?;
            Ok(())
        }
        Command::Evaluate(a) => {
            let out = require_out(g)?;
            let model = DnoModel::load(&a.model).context(|| format!("reading {}", a.model.display()))?;
            let data = read_split(&a.data)?;
            let rep = evaluate_to(&model, &a.model.display().to_string(), &data, out)?;
            println!("mean chi {} best {} worst {}", fmt_f64(rep.mean), fmt_f64(rep.best), fmt_f64(rep.worst));
            stamp(out, "evaluate", &cfg, line, |m| m.dataset_hashes = dataset_hashes(&data))
        }
        Command::Sweep(a) => {
            let out = require_out(g)?;
            let data = read_split(&a.data)?;
            create_dir(out)?;
            run_sweep(&cfg, a.kind, &data, out)?;
            stamp(out, "sweep", &cfg, line, |m| m.dataset_hashes = dataset_hashes(&data))
        }
        Command::Pipeline(a) => {
            let root = require_out(g)?;
            let stages = Stage::parse_list(&a.stages)?;
            let opts = RunOptions {
                force: g.force,
                workers,
                command_line: line.to_vec(),
                verbose: true,
            };
            run_pipeline(&cfg, &stages, root, &opts).map(|_| ())
        }
    }
}

fn run_sweep(cfg: &PipelineConfig, kind: SweepKind, data: &dno_core::dno::SplitDataset, out: &Path) -> Result<()> {
    let sw = &cfg.sweep;
    let archs = || {
        sw.archs
            .iter()
            .map(|a| parse_core::<Architecture>(a))
            .collect::<Result<Vec<_>>>()
    };
    let ctx = |what: &str| format!("{what} sweep");
    match kind {
        SweepKind::Size => {
            let r = dataset_size_study(&data.train, &data.test, &sw.sizes, &cfg.model, &cfg.train, &sw.seeds)
                .context(|| ctx("size"))?;
            r.write_csv(&out.join("size.csv")).context(|| "writing size.csv".into())?;
            write_json(&out.join("size.json"), &r)
        }
        SweepKind::Arch => {
            let r = architecture_sweep(&data.train, &data.test, &archs()?, &sw.batches, &cfg.model, &cfg.train, &sw.seeds)
                .context(|| ctx("architecture"))?;
            r.write_csv(&out.join("arch.csv")).context(|| "writing arch.csv".into())?;
            write_json(&out.join("arch.json"), &r)
        }
        SweepKind::Noise => {
            let rows = robustness_study(&data.train, &data.test, &sw.betas, &cfg.model, &cfg.train, &sw.seeds)
                .context(|| ctx("noise"))?;
            let path = out.join("noise.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Other(e.to_string()))?;
            let mut put = |r: [String; 4]| w.write_record(r).map_err(|e| CliError::Other(e.to_string()));
            put(["beta".into(), "mean_chi".into(), "residual_vs_noisy".into(), "residual_vs_clean".into()])?;
            for r in &rows {
                put([
                    fmt_f64(r.beta),
                    fmt_f64(r.mean_chi),
                    fmt_f64(r.residual_vs_noisy),
                    fmt_f64(r.residual_vs_clean),
                ])?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
            write_json(&out.join("noise.json"), &rows)
        }
        SweepKind::Modes => {
            let spec = dno_core::dno::ModelSpec {
                mode: CombineMode::Dot,
                ..cfg.model.clone()
            };
            let cells = match training_mode_benchmark(&data.train, &archs()?, sw.mode_threshold, &spec, &cfg.train, sw.mode_cap_secs) {
                Ok(c) => c,
                Err(CoreError::Timeout { partial, cell, cap_secs }) => {
                    eprintln!("benchmark cell {cell} hit the {cap_secs} s cap; ratios are lower bounds");
                    partial
                }
                Err(e) => return Err(e).context(|| ctx("training-mode")),
            };
            let path = out.join("modes.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Other(e.to_string()))?;
            let mut put = |r: [String; 5]| w.write_record(r).map_err(|e| CliError::Other(e.to_string()));
            put([
                "arch".into(),
                "sequence_secs".into(),
                "pointwise_secs".into(),
                "ratio".into(),
                "ratio_is_lower_bound".into(),
            ])?;
            for c in &cells {
                put([
                    c.arch.clone(),
                    fmt_f64(c.sequence.wall_time_secs),
                    fmt_f64(c.pointwise.wall_time_secs),
                    fmt_f64(c.speedup),
                    c.speedup_is_lower_bound.to_string(),
                ])?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
            write_json(&out.join("modes.json"), &cells)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn knots_parse() {
        assert_eq!(parse_knots("0:0,1:0.5").unwrap(), vec![(0.0, 0.0), (1.0, 0.5)]);
        assert!(parse_knots("0-0").is_err());
        assert!(parse_knots("0:x").is_err());
    }

    #[test]
    fn global_flags_go_anywhere() {
        let c = Cli::try_parse_from(["dno", "train", "--data", "d", "--seed", "4", "--out", "m.json", "--arch", "20x2"]).unwrap();
        assert_eq!(c.global.seed, Some(4));
        assert_eq!(c.global.out.as_deref(), Some(Path::new("m.json")));
        let c = Cli::try_parse_from(["dno", "--workers", "2", "simulate", "--loads", "l", "--refine", "1,2,4"]).unwrap();
        assert_eq!(c.global.workers, Some(2));
        match c.command {
            Command::Simulate(a) => assert_eq!(a.refine, Some(vec![1, 2, 4])),
            _ => unreachable!(),
        }
    }
}
