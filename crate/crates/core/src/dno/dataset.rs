use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::NormStats;
use crate::signal::{fmt_f64, parse_f64, TimeGrid};
use crate::{rng, Error, Result};

/// Paired input/output sequences on a common grid, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub grid: TimeGrid,
    pub inputs: Array2<f64>,
    pub outputs: Array2<f64>,
}

impl Dataset {
    pub fn new(grid: TimeGrid, inputs: Array2<f64>, outputs: Array2<f64>) -> Result<Self> {
        grid.validate()?;
        if inputs.nrows() != outputs.nrows() {
            return Err(Error::shape(format!(
                "{} input rows vs {} output rows",
                inputs.nrows(),
                outputs.nrows()
            )));
        }
        if inputs.ncols() != grid.n_points || outputs.ncols() != grid.n_points {
            return Err(Error::shape(format!(
                "sequences must have {} samples, got {} inputs / {} outputs",
                grid.n_points,
                inputs.ncols(),
                outputs.ncols()
            )));
        }
        if inputs.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Dataset { grid, inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            grid: self.grid,
            inputs: self.inputs.select(Axis(0), rows),
            outputs: self.outputs.select(Axis(0), rows),
        }
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            grid: self.grid,
            inputs: self.inputs.slice(s![..n, ..]).to_owned(),
            outputs: self.outputs.slice(s![..n, ..]).to_owned(),
        }
    }

    /// Same inputs, different outputs.
    pub fn with_outputs(&self, outputs: Array2<f64>) -> Result<Dataset> {
        Dataset::new(self.grid, self.inputs.clone(), outputs)
    }

    pub fn norm_stats(&self) -> NormStats {
        NormStats::fit(self.inputs.view(), self.outputs.view())
    }

    /// Seeded shuffle, then the first `round(train_fraction * len)` rows go to
    /// training. Returns the row indices of each side.
    pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::invalid(format!("train fraction {train_fraction} outside [0, 1]")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::seeded(seed));
        let n_train = (train_fraction * n as f64).round() as usize;
        let test = idx.split_off(n_train);
        Ok((idx, test))
    }

    /// Rows of `n_input + n_output` numbers, no header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        for (x, y) in self.inputs.rows().into_iter().zip(self.outputs.rows()) {
            w.write_record(x.iter().chain(y.iter()).map(|v| fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, grid: TimeGrid) -> Result<Self> {
        let n = grid.n_points;
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 2 * n {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("row {rows} has {} fields, expected {}", rec.len(), 2 * n),
                });
            }
            for (k, field) in rec.iter().enumerate() {
                let v = parse_f64(field, path)?;
                if k < n {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
            rows += 1;
        }
        let inputs = Array2::from_shape_vec((rows, n), xs).map_err(|e| Error::shape(e.to_string()))?;
        let outputs = Array2::from_shape_vec((rows, n), ys).map_err(|e| Error::shape(e.to_string()))?;
        Dataset::new(grid, inputs, outputs)
    }

    /// SHA-256 of the CSV serialization.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (x, y) in self.inputs.rows().into_iter().zip(self.outputs.rows()) {
            for v in x.iter().chain(y.iter()) {
                h.update(fmt_f64(*v).as_bytes());
                h.update(b",");
            }
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Provenance of a train/test dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub grid: TimeGrid,
    /// `force` or `element:<id>`.
    pub target: String,
    pub input_units: String,
    pub output_units: String,
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Sample names (load file stems) in row order.
    pub train_samples: Vec<String>,
    pub test_samples: Vec<String>,
    #[serde(default)]
    pub load_seeds: Vec<u64>,
    #[serde(default)]
    pub bar_hash: Option<String>,
    /// Fit on the training rows only.
    pub norm: NormStats,
    pub train_hash: String,
    pub test_hash: String,
}

/// A dataset directory: `train.csv`, `test.csv` and the `dataset.json` sidecar.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub manifest: DatasetManifest,
}

impl SplitDataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.train.write_csv(&dir.join("train.csv"))?;
        self.test.write_csv(&dir.join("test.csv"))?;
        std::fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("dataset.json");
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(&path)?).map_err(|e| Error::Format {
                path: path.clone(),
                message: e.to_string(),
            })?;
        let train = Dataset::read_csv(&dir.join("train.csv"), manifest.grid)?;
        let test = Dataset::read_csv(&dir.join("test.csv"), manifest.grid)?;
        Ok(SplitDataset { train, test, manifest })
    }
}
