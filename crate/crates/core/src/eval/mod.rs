//! Accuracy metric, output noise, box statistics and the study harnesses.

mod bench;
mod stats;
mod studies;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dno::{Dataset, DnoModel};
use crate::rng::{self, standard_normal};
use crate::signal::fmt_f64;
use crate::{Error, Result};

pub use bench::{training_mode_benchmark, ModeCell, ModeRun};
pub use stats::{quantile, BoxStats};
pub use studies::{
    architecture_sweep, dataset_size_study, robustness_study, time_extended_eval, train_and_evaluate, ExtendedCase,
    NoiseRow, SweepCell, SweepResult,
};

/// `100 * (1 - |pred - ref|_2 / |ref|_2)`, in percent.
pub fn accuracy_chi(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::shape(format!(
            "prediction has {} samples, reference {}",
            pred.len(),
            reference.len()
        )));
    }
    let norm_ref = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if norm_ref == 0.0 {
        return Err(Error::ZeroReference);
    }
    let norm_err = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum::<f64>()
        .sqrt();
    Ok((1.0 - norm_err / norm_ref) * 100.0)
}

/// Multiplicative white noise `x (1 + beta xi)` with independent standard normal `xi`.
pub fn add_noise(data: ArrayView2<f64>, beta: f64, seed: u64) -> Result<Array2<f64>> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("noise level must be non-negative, got {beta}")));
    }
    if beta == 0.0 {
        return Ok(data.to_owned());
    }
    let mut rng = rng::seeded(seed);
    // row-major draw order regardless of the view's memory layout
    let mut out = data.as_standard_layout().into_owned();
    for v in out.iter_mut() {
        *v *= 1.0 + beta * standard_normal(&mut rng);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// χ of each sample, percent.
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub best: f64,
    pub worst: f64,
    /// `|pred - ref|` per sample and time index.
    #[serde(skip)]
    pub error_profile: Array2<f64>,
}

impl AccuracyReport {
    pub fn from_predictions(pred: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<Self> {
        if pred.dim() != reference.dim() {
            return Err(Error::shape(format!("{:?} vs {:?}", pred.dim(), reference.dim())));
        }
        if pred.nrows() == 0 {
            return Err(Error::invalid("no samples to evaluate"));
        }
        let per_sample = pred
            .rows()
            .into_iter()
            .zip(reference.rows())
            .map(|(p, r)| accuracy_chi(&p.to_vec(), &r.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        let best = per_sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let worst = per_sample.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(AccuracyReport {
            per_sample,
            mean,
            best,
            worst,
            error_profile: (&pred - &reference).mapv(f64::abs),
        })
    }

    /// Relative L2 errors in percent, `100 - χ`.
    pub fn relative_errors(&self) -> Vec<f64> {
        self.per_sample.iter().map(|c| 100.0 - c).collect()
    }

    /// `sample,chi` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample", "chi"])?;
        for (i, c) in self.per_sample.iter().enumerate() {
            w.write_record([i.to_string(), fmt_f64(*c)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `sample,j,abs_error` rows.
    pub fn write_profile_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample", "j", "abs_error"])?;
        for ((i, j), e) in self.error_profile.indexed_iter() {
            w.write_record([i.to_string(), j.to_string(), fmt_f64(*e)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// χ of a model on every row of a physical-unit dataset.
pub fn evaluate(model: &DnoModel, data: &Dataset) -> Result<AccuracyReport> {
    let pred = model.predict_batch(data.inputs.view())?;
    AccuracyReport::from_predictions(pred.view(), data.outputs.view())
}
