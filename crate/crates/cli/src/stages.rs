//! The work behind each subcommand and pipeline stage, operating on directories.

use std::collections::BTreeMap;
use std::path::Path;

use dno_core::dno::{train, DnoModel, SplitDataset, TrainReport};
use dno_core::eval::{evaluate, AccuracyReport};
use dno_core::incremental::{build_route, train_incremental, IncrementalReport, RouteStrategy};
use dno_core::oracle::{refinement_check, simulate, BarModel};
use dno_core::rng::derive_seed;
use dno_core::signal::{fmt_f64, GpSampler};
use dno_core::{LoadSignal, TimeGrid};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::dataset_build::{element_dir, read_element_sets};
use crate::error::{CliError, Context, Result};

/// Applies `f` to every item on up to `workers` threads, keeping order.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let results: Vec<Result<Vec<R>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<R>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Empties `dir` before a stage rewrites it.
pub fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    create_dir(dir)
}

pub fn sample_name(prefix: &str, i: usize) -> String {
    format!("{prefix}_{i:05}")
}

/// Writes `count` GP loads; sample `i` uses seed `derive_seed(gp.seed, i)`.
/// Returns the seed of every sample by name.
pub fn generate_gp(cfg: &PipelineConfig, count: usize, out: &Path, workers: usize) -> Result<BTreeMap<String, u64>> {
    let sampler = GpSampler::new(cfg.gp, cfg.grid).context(|| "setting up the GP sampler".into())?;
    create_dir(out)?;
    let idx: Vec<usize> = (0..count).collect();
    let seeds = par_map(&idx, workers, |&i| {
        let seed = derive_seed(cfg.gp.seed, i as u64);
        let name = sample_name("gp", i);
        let path = out.join(format!("{name}.csv"));
        sampler
            .sample(seed)
            .write_csv(&path)
            .context(|| format!("writing {}", path.display()))?;
        Ok((name, seed))
    })?;
    Ok(seeds.into_iter().collect())
}

pub fn write_load(load: &LoadSignal, out: &Path, name: &str) -> Result<()> {
    create_dir(out)?;
    let path = out.join(format!("{name}.csv"));
    load.write_csv(&path).context(|| format!("writing {}", path.display()))
}

/// Simulates every load in `loads` and writes `<stem>.csv` plus `bar.json`.
/// With `refine`, the first load is re-run under segment refinement into `refinement.csv`.
pub fn simulate_dir(bar: &BarModel, loads: &Path, out: &Path, workers: usize, refine: Option<&[usize]>) -> Result<usize> {
    if !loads.is_dir() {
        return Err(CliError::missing(loads, "run generate first"));
    }
    let mut files: Vec<_> = std::fs::read_dir(loads)
        .map_err(|e| CliError::io(loads, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::missing(loads, "no load files"));
    }
    create_dir(out)?;
    bar.save(&out.join("bar.json")).context(|| "writing bar.json".into())?;
    par_map(&files, workers, |p| {
        let load = LoadSignal::read_csv(p).context(|| format!("reading {}", p.display()))?;
        let sim = simulate(bar, &load).context(|| format!("simulating {}", p.display()))?;
        let dest = out.join(p.file_name().expect("file"));
        sim.write_csv(&dest).context(|| format!("writing {}", dest.display()))
    })?;
    if let Some(mult) = refine {
        let load = LoadSignal::read_csv(&files[0]).context(|| format!("reading {}", files[0].display()))?;
        let rows = refinement_check(bar, &load, mult).context(|| "refinement check".into())?;
        let path = out.join("refinement.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Other(e.to_string()))?;
        let mut put = |rec: Vec<String>| w.write_record(rec).map_err(|e| CliError::Other(e.to_string()));
        put(vec![
            "multiplier".into(),
            "n_segments".into(),
            "peak_force".into(),
            "relative_difference".into(),
        ])?;
        for r in rows {
            put(vec![
                r.multiplier.to_string(),
                r.n_segments.to_string(),
                fmt_f64(r.peak_force),
                fmt_f64(r.relative_difference),
            ])?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(files.len())
}

pub fn read_split(dir: &Path) -> Result<SplitDataset> {
    if !dir.join("dataset.json").exists() {
        return Err(CliError::missing(dir, "no dataset here; run the dataset stage first"));
    }
    SplitDataset::load(dir).context(|| format!("reading dataset {}", dir.display()))
}

pub fn write_loss_history(report: &TrainReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Other(e.to_string()))?;
    let mut put = |rec: [String; 4]| w.write_record(rec).map_err(|e| CliError::Other(e.to_string()));
    put(["iteration".into(), "loss".into(), "best".into(), "validation".into()])?;
    for h in &report.history {
        put([
            h.iteration.to_string(),
            fmt_f64(h.loss),
            fmt_f64(h.best),
            h.validation.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Trains a fresh model on the dataset's training rows. Writes the model to
/// `model_path` and `train_report.json` plus `losscurve.csv` beside it.
pub fn train_model(cfg: &PipelineConfig, data: &SplitDataset, model_path: &Path) -> Result<(DnoModel, TrainReport)> {
    let init = cfg
        .model
        .build(data.train.grid, data.manifest.norm)
        .context(|| "building the model".into())?;
    let (model, report) = train(&init, &data.train, &cfg.train).context(|| "training".into())?;
    let dir = model_path.parent().unwrap_or(Path::new("."));
    create_dir(dir)?;
    model.save(model_path).context(|| format!("writing {}", model_path.display()))?;
    write_json(&dir.join("train_report.json"), &report)?;
    write_loss_history(&report, &dir.join("losscurve.csv"))?;
    Ok((model, report))
}

/// Incremental training over an `elements` dataset. Writes `route.json`,
/// `model_<id>.json` per element, `losscurves.csv` and `incremental_report.json`.
pub fn train_incremental_dir(cfg: &PipelineConfig, data: &Path, route: &RouteStrategy, out: &Path) -> Result<IncrementalReport> {
    let (train_set, _, _) = read_element_sets(data)?;
    let order = build_route(&train_set, route).map_err(|e| CliError::config(e.to_string()))?;
    let (models, report) = train_incremental(&train_set, &order, &cfg.incremental.schedule, &cfg.train, &cfg.model)
        .context(|| "incremental training".into())?;
    create_dir(out)?;
    write_json(&out.join("route.json"), &order)?;
    for (id, m) in models.ids.iter().zip(&models.models) {
        let p = out.join(format!("model_{id}.json"));
        m.save(&p).context(|| format!("writing {}", p.display()))?;
    }
    report
        .write_loss_curves(&out.join("losscurves.csv"))
        .context(|| "writing losscurves.csv".into())?;
    write_json(&out.join("incremental_report.json"), &report)?;
    Ok(report)
}

#[derive(Serialize)]
struct Summary<'a> {
    model: String,
    samples: usize,
    mean_chi: f64,
    best_chi: f64,
    worst_chi: f64,
    report: &'a AccuracyReport,
}

/// χ of `model` on the dataset's test rows: `accuracy.csv`, `error_profile.csv`, `summary.json`.
pub fn evaluate_to(model: &DnoModel, model_name: &str, data: &SplitDataset, out: &Path) -> Result<AccuracyReport> {
    let rep = evaluate(model, &data.test).context(|| "evaluating".into())?;
    create_dir(out)?;
    rep.write_csv(&out.join("accuracy.csv")).context(|| "writing accuracy.csv".into())?;
    rep.write_profile_csv(&out.join("error_profile.csv"))
        .context(|| "writing error_profile.csv".into())?;
    write_json(
        &out.join("summary.json"),
        &Summary {
            model: model_name.to_string(),
            samples: rep.per_sample.len(),
            mean_chi: rep.mean,
            best_chi: rep.best,
            worst_chi: rep.worst,
            report: &rep,
        },
    )?;
    Ok(rep)
}

/// Per-element χ of incremental models on the test rows: `elements.csv` and `summary.json`.
pub fn evaluate_elements(models_dir: &Path, data: &Path, out: &Path) -> Result<Vec<(usize, f64)>> {
    let (_, test, _) = read_element_sets(data)?;
    create_dir(out)?;
    let mut rows = Vec::new();
    for e in &test.elements {
        let p = models_dir.join(format!("model_{}.json", e.id));
        if !p.exists() {
            return Err(CliError::missing(&p, "run train-incremental first"));
        }
        let m = DnoModel::load(&p).context(|| format!("reading {}", p.display()))?;
        let d = SplitDataset::load(&element_dir(data, e.id)).context(|| "reading element dataset".into())?;
        let rep = evaluate(&m, &d.test).context(|| format!("evaluating element {}", e.id))?;
        rows.push((e.id, rep.mean));
    }
    let path = out.join("elements.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Other(e.to_string()))?;
    w.write_record(["element", "mean_chi"]).map_err(|e| CliError::Other(e.to_string()))?;
    for (id, chi) in &rows {
        w.write_record([id.to_string(), fmt_f64(*chi)])
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len().max(1) as f64;
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({ "elements": rows.len(), "mean_chi": mean }),
    )?;
    Ok(rows)
}

/// Prediction of one load, resampled onto the model grid when the grids differ.
pub fn predict_to(model: &DnoModel, load: &LoadSignal, out: &Path) -> Result<Vec<f64>> {
    let (grid, pred): (TimeGrid, Vec<f64>) = if load.grid == model.grid {
        (model.grid, model.predict(load).context(|| "predicting".into())?)
    } else {
        (model.grid, model.predict_resampled(load).context(|| "predicting".into())?)
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(out).map_err(|e| CliError::Other(e.to_string()))?;
    w.write_record(["t", "prediction"]).map_err(|e| CliError::Other(e.to_string()))?;
    for (j, p) in pred.iter().enumerate() {
        w.write_record([fmt_f64(grid.t(j)), fmt_f64(*p)])
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;
    Ok(pred)
}
