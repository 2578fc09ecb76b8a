use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{accuracy_chi, add_noise, evaluate, AccuracyReport, BoxStats};
use crate::dno::{train, Architecture, Dataset, DnoModel, ModelSpec, TrainConfig, TrainReport};
use crate::oracle::{simulate, BarModel};
use crate::rng::derive_seed;
use crate::signal::{fmt_f64, resample_load, resample_series, LoadSignal};
use crate::{Error, Result};

/// Builds a fresh model from `spec`, normalized on `train_set`, trains it and
/// scores it on `test_set`.
pub fn train_and_evaluate(
    spec: &ModelSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(DnoModel, TrainReport, AccuracyReport)> {
    let model = spec.build(train_set.grid, train_set.norm_stats())?;
    let (model, report) = train(&model, train_set, cfg)?;
    let acc = evaluate(&model, test_set)?;
    Ok((model, report, acc))
}

fn rms(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    ((&a - &b).mapv(|d| d * d).sum() / a.len().max(1) as f64).sqrt()
}

fn with_seed(spec: &ModelSpec, cfg: &TrainConfig, seed: u64) -> (ModelSpec, TrainConfig) {
    (
        ModelSpec { seed, ..spec.clone() },
        TrainConfig { seed, ..cfg.clone() },
    )
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::invalid("a study needs at least one seed"));
    }
    Ok(())
}

/// One noise level of a robustness study, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub beta: f64,
    /// Mean χ against the clean held-out references.
    pub mean_chi: f64,
    pub per_seed_chi: Vec<f64>,
    /// RMS of prediction minus noise-contaminated test outputs.
    pub residual_vs_noisy: f64,
    /// RMS of prediction minus clean test outputs.
    pub residual_vs_clean: f64,
    pub seeds: Vec<u64>,
}

/// Trains on `x (1 + beta xi)`-contaminated outputs for each noise level and
/// evaluates against the clean test references.
pub fn robustness_study(
    train_set: &Dataset,
    test_set: &Dataset,
    betas: &[f64],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<NoiseRow>> {
    check_seeds(seeds)?;
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut chis = Vec::new();
        let mut r_noisy = 0.0;
        let mut r_clean = 0.0;
        for &seed in seeds {
            let noisy_train = train_set.with_outputs(add_noise(train_set.outputs.view(), beta, derive_seed(seed, 10))?)?;
            let noisy_test = add_noise(test_set.outputs.view(), beta, derive_seed(seed, 11))?;
            let (s, c) = with_seed(spec, cfg, seed);
            let (model, _, acc) = train_and_evaluate(&s, &noisy_train, test_set, &c)?;
            let pred = model.predict_batch(test_set.inputs.view())?;
            chis.push(acc.mean);
            r_noisy += rms(pred.view(), noisy_test.view());
            r_clean += rms(pred.view(), test_set.outputs.view());
        }
        let k = seeds.len() as f64;
        rows.push(NoiseRow {
            beta,
            mean_chi: chis.iter().sum::<f64>() / k,
            per_seed_chi: chis,
            residual_vs_noisy: r_noisy / k,
            residual_vs_clean: r_clean / k,
            seeds: seeds.to_vec(),
        });
    }
    Ok(rows)
}

/// One configuration of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub label: String,
    pub train_size: usize,
    pub arch: String,
    pub batch_size: usize,
    /// Relative L2 error per test sample (pooled over seeds), percent.
    pub error_stats: BoxStats,
    pub mean_chi: f64,
    pub final_loss: f64,
    pub wall_time_secs: f64,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `size` or `arch`.
    pub axis: String,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// One row per cell with the box statistics flattened.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "label",
            "train_size",
            "arch",
            "batch_size",
            "mean_chi",
            "error_mean",
            "error_q25",
            "error_median",
            "error_q75",
            "whisker_low",
            "whisker_high",
            "n_outliers",
            "final_loss",
            "wall_time_secs",
        ])?;
        for c in &self.cells {
            let s = &c.error_stats;
            w.write_record([
                c.label.clone(),
                c.train_size.to_string(),
                c.arch.clone(),
                c.batch_size.to_string(),
                fmt_f64(c.mean_chi),
                fmt_f64(s.mean),
                fmt_f64(s.q25),
                fmt_f64(s.median),
                fmt_f64(s.q75),
                fmt_f64(s.whisker_low),
                fmt_f64(s.whisker_high),
                s.outliers.len().to_string(),
                fmt_f64(c.final_loss),
                fmt_f64(c.wall_time_secs),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_cell(
    label: String,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    train_for_seed: impl Fn(u64) -> Result<Dataset>,
    test_set: &Dataset,
    seeds: &[u64],
) -> Result<SweepCell> {
    let mut errors = Vec::new();
    let mut chis = Vec::new();
    let mut loss = 0.0;
    let mut secs = 0.0;
    let mut size = 0;
    for &seed in seeds {
        let data = train_for_seed(seed)?;
        size = data.len();
        let (s, c) = with_seed(spec, cfg, seed);
        let (_, rep, acc) = train_and_evaluate(&s, &data, test_set, &c)?;
        errors.extend(acc.relative_errors());
        chis.push(acc.mean);
        loss += rep.final_loss;
        secs += rep.wall_time_secs;
    }
    let k = seeds.len() as f64;
    Ok(SweepCell {
        label,
        train_size: size,
        arch: spec.arch.to_string(),
        batch_size: cfg.batch_size,
        error_stats: BoxStats::from_values(&errors)?,
        mean_chi: chis.iter().sum::<f64>() / k,
        final_loss: loss / k,
        wall_time_secs: secs,
        seeds: seeds.to_vec(),
    })
}

/// Trains on seeded random subsets of each size and summarizes the held-out
/// relative errors per size.
pub fn dataset_size_study(
    full_train: &Dataset,
    test_set: &Dataset,
    sizes: &[usize],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<SweepResult> {
    check_seeds(seeds)?;
    if let Some(&too_big) = sizes.iter().find(|&&s| s > full_train.len() || s == 0) {
        return Err(Error::invalid(format!(
            "subset size {too_big} outside 1..={}",
            full_train.len()
        )));
    }
    let cells = sizes
        .iter()
        .map(|&size| {
            run_cell(
                format!("n={size}"),
                spec,
                cfg,
                |seed| {
                    let (idx, _) = Dataset::split_indices(full_train.len(), 1.0, derive_seed(seed, 20))?;
                    Ok(full_train.subset(&idx[..size]))
                },
                test_set,
                seeds,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis: "size".into(),
        cells,
    })
}

/// Every `(architecture, batch size)` pair at the same iteration budget and seeds.
pub fn architecture_sweep(
    train_set: &Dataset,
    test_set: &Dataset,
    archs: &[Architecture],
    batches: &[usize],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<SweepResult> {
    check_seeds(seeds)?;
    let mut cells = Vec::new();
    for arch in archs {
        for &batch in batches {
            let s = ModelSpec {
                arch: arch.clone(),
                ..spec.clone()
            };
            let c = TrainConfig {
                batch_size: batch,
                loss_threshold: 0.0,
                ..cfg.clone()
            };
            cells.push(run_cell(
                format!("{arch}/b{batch}"),
                &s,
                &c,
                |_| Ok(train_set.clone()),
                test_set,
                seeds,
            )?);
        }
    }
    Ok(SweepResult {
        axis: "arch".into(),
        cells,
    })
}

/// Result of one time-extended case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedCase {
    pub label: String,
    pub native_points: usize,
    pub t_end: f64,
    pub chi: f64,
    /// Relative L2 difference between the second and first half of the
    /// ground-truth force.
    pub truth_asymmetry: f64,
    pub predicted_asymmetry: f64,
    /// Predicted half-to-half difference within half of the true one.
    pub captures_asymmetry: bool,
    #[serde(skip)]
    pub truth: Vec<f64>,
    #[serde(skip)]
    pub prediction: Vec<f64>,
}

fn half_asymmetry(f: &[f64]) -> f64 {
    let mid = (f.len() - 1) / 2;
    let (a, b) = (&f[..=mid], &f[f.len() - 1 - mid..]);
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

/// Resamples each load onto the model grid and predicts; the ground truth is
/// simulated on the load's native grid and resampled the same way.
pub fn time_extended_eval(
    model: &DnoModel,
    bar: &BarModel,
    cases: &[(String, LoadSignal)],
) -> Result<Vec<ExtendedCase>> {
    cases
        .iter()
        .map(|(label, load)| {
            let sim = simulate(bar, load)?;
            let truth = resample_series(&sim.force, model.grid.n_points);
            let prediction = model.predict(&resample_load(load, &model.grid)?)?;
            let truth_asymmetry = half_asymmetry(&truth);
            let predicted_asymmetry = half_asymmetry(&prediction);
            Ok(ExtendedCase {
                label: label.clone(),
                native_points: load.grid.n_points,
                t_end: load.grid.t_end,
                chi: accuracy_chi(&prediction, &truth)?,
                truth_asymmetry,
                predicted_asymmetry,
                captures_asymmetry: (predicted_asymmetry - truth_asymmetry).abs() <= 0.5 * truth_asymmetry,
                truth,
                prediction,
            })
        })
        .collect()
}

#[cfg(test)]
/// Stacks rows into a matrix; rows must share a length.
pub(crate) fn stack_rows(rows: &[Vec<f64>]) -> Result<ndarray::Array2<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    ndarray::Array2::from_shape_vec((rows.len(), n), flat).map_err(|e| Error::shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dno::CombineMode;
    use crate::signal::{sinusoid_load, GpLoadParams, GpSampler};
    use crate::TimeGrid;

    fn tiny_task(n_rows: usize, seed: u64) -> Dataset {
        let grid = TimeGrid::new(0.0, 1.0, 21).unwrap();
        let gp = GpSampler::new(GpLoadParams::default(), grid).unwrap();
        let bar = BarModel::default();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n_rows {
            let l = gp.sample(derive_seed(seed, i as u64));
            ys.push(simulate(&bar, &l).unwrap().force);
            xs.push(l.strain);
        }
        Dataset::new(grid, stack_rows(&xs).unwrap(), stack_rows(&ys).unwrap()).unwrap()
    }

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            mode: CombineMode::Hadamard,
            arch: "16x2".parse().unwrap(),
            latent: 8,
            seed: 0,
        }
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            max_iterations: 200,
            ..Default::default()
        }
    }

    #[test]
    fn zero_noise_row_reproduces_clean_training() {
        let tr = tiny_task(30, 1);
        let te = tiny_task(6, 2);
        let rows = robustness_study(&tr, &te, &[0.0, 0.1], &tiny_spec(), &tiny_cfg(), &[3]).unwrap();
        let (s, c) = with_seed(&tiny_spec(), &tiny_cfg(), 3);
        let (_, _, clean) = train_and_evaluate(&s, &tr, &te, &c).unwrap();
        assert_eq!(rows[0].mean_chi, clean.mean);
        assert_eq!(rows[0].residual_vs_noisy, rows[0].residual_vs_clean);
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn single_cell_sweep_matches_direct_run() {
        let tr = tiny_task(20, 4);
        let te = tiny_task(5, 5);
        let arch: Architecture = "12".parse().unwrap();
        let sweep = architecture_sweep(&tr, &te, &[arch.clone()], &[4], &tiny_spec(), &tiny_cfg(), &[7]).unwrap();
        let spec = ModelSpec {
            arch,
            seed: 7,
            ..tiny_spec()
        };
        let cfg = TrainConfig {
            batch_size: 4,
            seed: 7,
            ..tiny_cfg()
        };
        let (_, _, acc) = train_and_evaluate(&spec, &tr, &te, &cfg).unwrap();
        assert_eq!(sweep.cells.len(), 1);
        assert_eq!(sweep.cells[0].mean_chi, acc.mean);
        assert_eq!(sweep.cells[0].label, "12/b4");
    }

    #[test]
    fn full_size_subset_is_the_baseline() {
        let tr = tiny_task(12, 6);
        let te = tiny_task(4, 7);
        let res = dataset_size_study(&tr, &te, &[12, 6], &tiny_spec(), &tiny_cfg(), &[1]).unwrap();
        assert_eq!(res.cells[0].train_size, 12);
        assert_eq!(res.cells[1].train_size, 6);
        let c = &res.cells[0].error_stats;
        assert!(c.q25 <= c.median && c.median <= c.q75);
        assert!(dataset_size_study(&tr, &te, &[13], &tiny_spec(), &tiny_cfg(), &[1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        res.write_csv(&dir.path().join("size.csv")).unwrap();
    }

    #[test]
    fn sinusoid_truth_is_asymmetric() {
        let tr = tiny_task(10, 8);
        let spec = tiny_spec();
        let model = spec.build(tr.grid, tr.norm_stats()).unwrap();
        let grid2 = TimeGrid::new(0.0, 2.0, 41).unwrap();
        let sin = sinusoid_load(&grid2, 3e-3, 1.0).unwrap();
        let gp1 = GpSampler::new(GpLoadParams::default(), tr.grid).unwrap().sample(3);
        let res = time_extended_eval(&model, &BarModel::default(), &[("sin".into(), sin), ("gp".into(), gp1.clone())]).unwrap();
        assert!(res[0].truth_asymmetry > 0.01, "{}", res[0].truth_asymmetry);
        assert_eq!(res[0].truth.len(), 21);
        // a load already on the model grid is evaluated as usual
        let direct = evaluate(
            &model,
            &Dataset::new(
                tr.grid,
                stack_rows(&[gp1.strain.clone()]).unwrap(),
                stack_rows(&[simulate(&BarModel::default(), &gp1).unwrap().force]).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(res[1].chi, direct.mean);
    }
}
