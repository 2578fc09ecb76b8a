use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::net::{DenseNet, NetFile, NetGrads, Tape};
use super::train::TrainConfig;
use crate::rng::derive_seed;
use crate::signal::{resample_load, LoadSignal, TimeGrid};
use crate::{Error, Result};

/// How branch and trunk outputs are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// `U[i][j] = B(Y_i)[j] * T(t)[j]`: the trunk sees the whole time vector once.
    Hadamard,
    /// `U[i][j] = sum_k B(Y_i)[k] * T(t_j)[k]`: classic inner-product form.
    Dot,
}

impl FromStr for CombineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard" => Ok(CombineMode::Hadamard),
            "dot" => Ok(CombineMode::Dot),
            other => Err(Error::invalid(format!("unknown combine mode `{other}`"))),
        }
    }
}

impl fmt::Display for CombineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CombineMode::Hadamard => "hadamard",
            CombineMode::Dot => "dot",
        })
    }
}

/// Hidden-layer widths shared by branch and trunk, written like `200x3`,
/// `200-300-200` or `200x2-300-200x2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Architecture {
    pub hidden: Vec<usize>,
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse architecture `{s}`"));
        let mut hidden = Vec::new();
        for part in s.split('-') {
            let (width, count) = match part.split_once(['x', '*']) {
                Some((w, c)) => (w, c.parse::<usize>().map_err(|_| bad())?),
                None => (part, 1),
            };
            let width = width.trim().parse::<usize>().map_err(|_| bad())?;
            if width == 0 || count == 0 {
                return Err(bad());
            }
            hidden.extend(std::iter::repeat_n(width, count));
        }
        Ok(Architecture { hidden })
    }
}

impl TryFrom<String> for Architecture {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Architecture> for String {
    fn from(a: Architecture) -> String {
        a.to_string()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut groups: Vec<(usize, usize)> = Vec::new();
        for &w in &self.hidden {
            match groups.last_mut() {
                Some((gw, n)) if *gw == w => *n += 1,
                _ => groups.push((w, 1)),
            }
        }
        let parts: Vec<String> = groups
            .into_iter()
            .map(|(w, n)| if n == 1 { w.to_string() } else { format!("{w}x{n}") })
            .collect();
        f.write_str(&parts.join("-"))
    }
}

/// Everything needed to build a fresh model apart from the grid and normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub mode: CombineMode,
    pub arch: Architecture,
    /// Inner-product width in dot mode.
    pub latent: usize,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            mode: CombineMode::Hadamard,
            arch: Architecture { hidden: vec![200; 3] },
            latent: 100,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn build(&self, grid: TimeGrid, norm: NormStats) -> Result<DnoModel> {
        if self.latent == 0 {
            return Err(Error::invalid("latent width must be positive"));
        }
        DnoModel::init(self.mode, grid, &self.arch, self.latent, norm, self.seed)
    }
}

/// Scalar z-score statistics for inputs and outputs, fit on a training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_mean: f64,
    pub input_std: f64,
    pub output_mean: f64,
    pub output_std: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats {
            input_mean: 0.0,
            input_std: 1.0,
            output_mean: 0.0,
            output_std: 1.0,
        }
    }
}

fn mean_std(x: ArrayView2<f64>) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
}

impl NormStats {
    pub fn fit(inputs: ArrayView2<f64>, outputs: ArrayView2<f64>) -> Self {
        let (input_mean, input_std) = mean_std(inputs);
        let (output_mean, output_std) = mean_std(outputs);
        NormStats {
            input_mean,
            input_std,
            output_mean,
            output_std,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.input_mean) && ok(self.output_mean) && self.input_std > 0.0 && self.output_std > 0.0)
            || !(ok(self.input_std) && ok(self.output_std))
        {
            return Err(Error::invalid("normalization statistics must be finite with positive stds"));
        }
        Ok(())
    }

    pub fn normalize_inputs(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.mapv(|v| (v - self.input_mean) / self.input_std)
    }

    pub fn normalize_outputs(&self, y: ArrayView2<f64>) -> Array2<f64> {
        y.mapv(|v| (v - self.output_mean) / self.output_std)
    }

    pub fn denormalize_outputs(&self, y: ArrayView2<f64>) -> Array2<f64> {
        y.mapv(|v| v * self.output_std + self.output_mean)
    }
}

/// Mean of squared differences over all entries.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n = pred.len().max(1) as f64;
    Ok(ndarray::Zip::from(&pred)
        .and(&target)
        .fold(0.0, |acc, p, t| acc + (p - t) * (p - t))
        / n)
}

/// Branch and trunk gradients, laid out like [`DnoModel::param_slices`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub branch: NetGrads,
    pub trunk: NetGrads,
}

impl Grads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut s = self.branch.slices();
        s.extend(self.trunk.slices());
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Branch net + trunk net + combination rule + normalization: the learned operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DnoModel {
    pub mode: CombineMode,
    pub grid: TimeGrid,
    pub branch: DenseNet,
    pub trunk: DenseNet,
    pub norm: NormStats,
    /// Configuration of the run that produced the weights, if any.
    pub trained_with: Option<TrainConfig>,
}

impl DnoModel {
    pub fn new(mode: CombineMode, grid: TimeGrid, branch: DenseNet, trunk: DenseNet, norm: NormStats) -> Result<Self> {
        let model = DnoModel {
            mode,
            grid,
            branch,
            trunk,
            norm,
            trained_with: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Fresh model whose branch and trunk share the hidden architecture.
    /// `latent` is the inner-product width in dot mode and ignored in
    /// hadamard mode, where both nets end in one unit per time sample.
    pub fn init(
        mode: CombineMode,
        grid: TimeGrid,
        arch: &Architecture,
        latent: usize,
        norm: NormStats,
        seed: u64,
    ) -> Result<Self> {
        grid.validate()?;
        let n = grid.n_points;
        let (branch_dims, trunk_dims) = match mode {
            CombineMode::Hadamard => (layer_dims(n, &arch.hidden, n), layer_dims(n, &arch.hidden, n)),
            CombineMode::Dot => (layer_dims(n, &arch.hidden, latent), layer_dims(1, &arch.hidden, latent)),
        };
        let branch = DenseNet::init(&branch_dims, derive_seed(seed, 0))?;
        let trunk = DenseNet::init(&trunk_dims, derive_seed(seed, 1))?;
        Self::new(mode, grid, branch, trunk, norm)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.norm.validate()?;
        let n = self.grid.n_points;
        if self.branch.input_dim() != n {
            return Err(Error::shape(format!(
                "branch takes {} inputs but the grid has {n} points",
                self.branch.input_dim()
            )));
        }
        match self.mode {
            CombineMode::Hadamard => {
                if self.branch.output_dim() != n || self.trunk.output_dim() != n || self.trunk.input_dim() != n {
                    return Err(Error::shape(format!(
                        "hadamard mode needs branch {n}->{n} and trunk {n}->{n}"
                    )));
                }
            }
            CombineMode::Dot => {
                if self.trunk.input_dim() != 1 || self.branch.output_dim() != self.trunk.output_dim() {
                    return Err(Error::shape(
                        "dot mode needs a scalar-input trunk with the branch's output width",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        let d = self.branch.dims();
        Architecture {
            hidden: d[1..d.len() - 1].to_vec(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.branch.n_params() + self.trunk.n_params()
    }

    /// Trunk input: the time row `1 x N` (hadamard) or time column `N x 1` (dot).
    pub fn trunk_input(&self) -> Array2<f64> {
        let t = Array1::from(self.grid.times());
        let n = t.len();
        match self.mode {
            CombineMode::Hadamard => t.into_shape_with_order((1, n)).expect("row"),
            CombineMode::Dot => t.into_shape_with_order((n, 1)).expect("column"),
        }
    }

    fn check_batch(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.grid.n_points {
            return Err(Error::shape(format!(
                "model expects sequences of {} samples, got {}",
                self.grid.n_points,
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Operator output for a batch of normalized input sequences, in normalized units.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(x)?;
        let b = self.branch.forward(x)?;
        let t = self.trunk.forward(self.trunk_input().view())?;
        Ok(combine(self.mode, b, &t))
    }

    /// Training loss on normalized data.
    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
        mse_loss(self.forward(x)?.view(), y)
    }

    /// Loss and exact gradients of the mean squared error on normalized data.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(f64, Grads)> {
        self.check_batch(x)?;
        let (b, b_tape) = self.branch.forward_taped(x)?;
        let (t, t_tape) = self.trunk.forward_taped(self.trunk_input().view())?;
        self.backprop(b, b_tape, t, t_tape, y)
    }

    fn backprop(
        &self,
        b: Array2<f64>,
        b_tape: Tape,
        t: Array2<f64>,
        t_tape: Tape,
        y: ArrayView2<f64>,
    ) -> Result<(f64, Grads)> {
        let u = combine(self.mode, b.clone(), &t);
        let loss = mse_loss(u.view(), y)?;
        let scale = 2.0 / u.len() as f64;
        let du = (&u - &y) * scale;
        let (db, dt) = match self.mode {
            CombineMode::Hadamard => {
                let db = &du * &t;
                let dt = (&du * &b).sum_axis(Axis(0)).insert_axis(Axis(0));
                (db, dt)
            }
            CombineMode::Dot => (du.dot(&t), du.t().dot(&b)),
        };
        Ok((
            loss,
            Grads {
                branch: self.branch.backward(&b_tape, db),
                trunk: self.trunk.backward(&t_tape, dt),
            },
        ))
    }

    /// Point-wise evaluation (dot mode): one output per `(sequence, time)` pair.
    pub fn forward_points(&self, x_rows: ArrayView2<f64>, t: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.require_dot()?;
        self.check_batch(x_rows)?;
        let b = self.branch.forward(x_rows)?;
        let tcol = t.to_owned().insert_axis(Axis(1));
        let tr = self.trunk.forward(tcol.view())?;
        Ok((&b * &tr).sum_axis(Axis(1)))
    }

    /// Mean squared error and gradients over a batch of `(sequence, time) -> value` points.
    pub fn point_loss_and_grad(
        &self,
        x_rows: ArrayView2<f64>,
        t: ArrayView1<f64>,
        y: ArrayView1<f64>,
    ) -> Result<(f64, Grads)> {
        self.require_dot()?;
        self.check_batch(x_rows)?;
        if t.len() != x_rows.nrows() || y.len() != x_rows.nrows() {
            return Err(Error::shape("point batch arrays differ in length"));
        }
        let (b, b_tape) = self.branch.forward_taped(x_rows)?;
        let tcol = t.to_owned().insert_axis(Axis(1));
        let (tr, t_tape) = self.trunk.forward_taped(tcol.view())?;
        let u = (&b * &tr).sum_axis(Axis(1));
        let k = u.len() as f64;
        let diff = &u - &y;
        let loss = diff.mapv(|d| d * d).sum() / k;
        let du = (diff * (2.0 / k)).insert_axis(Axis(1));
        let db = &tr * &du;
        let dt = &b * &du;
        Ok((
            loss,
            Grads {
                branch: self.branch.backward(&b_tape, db),
                trunk: self.trunk.backward(&t_tape, dt),
            },
        ))
    }

    fn require_dot(&self) -> Result<()> {
        if self.mode != CombineMode::Dot {
            return Err(Error::InvalidMode { expected: "dot" });
        }
        Ok(())
    }

    /// Physical-unit predictions for physical-unit input sequences.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let x = self.norm.normalize_inputs(inputs);
        let u = self.forward(x.view())?;
        Ok(self.norm.denormalize_outputs(u.view()))
    }

    /// Response to a load on the model's own grid length.
    pub fn predict(&self, load: &LoadSignal) -> Result<Vec<f64>> {
        if load.strain.len() != self.grid.n_points {
            return Err(Error::shape(format!(
                "load has {} samples, model expects {}",
                load.strain.len(),
                self.grid.n_points
            )));
        }
        let x = ArrayView2::from_shape((1, load.strain.len()), &load.strain).expect("row");
        Ok(self.predict_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Resamples the load onto the model grid first.
    pub fn predict_resampled(&self, load: &LoadSignal) -> Result<Vec<f64>> {
        if load.strain.len() == self.grid.n_points {
            return self.predict(load);
        }
        self.predict(&resample_load(load, &self.grid)?)
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut s = self.branch.param_slices();
        s.extend(self.trunk.param_slices());
        s
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut s = self.branch.param_slices_mut();
        s.extend(self.trunk.param_slices_mut());
        s
    }

    /// Copies every weight and bias from `other`, which must share the shapes.
    pub fn copy_params_from(&mut self, other: &DnoModel) -> Result<()> {
        if self.branch.dims() != other.branch.dims() || self.trunk.dims() != other.trunk.dims() {
            return Err(Error::shape("cannot copy parameters between different architectures"));
        }
        for (dst, src) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    /// SHA-256 over the bit patterns of all parameters.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in self.param_slices() {
            for v in s {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            mode: self.mode,
            grid: self.grid,
            branch: NetFile::from(&self.branch),
            trunk: NetFile::from(&self.trunk),
            norm: self.norm,
            train_config: self.trained_with.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let mut model = DnoModel::new(
            file.mode,
            file.grid,
            file.branch.try_into()?,
            file.trunk.try_into()?,
            file.norm,
        )?;
        model.trained_with = file.train_config;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

fn layer_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(hidden.len() + 2);
    d.push(input);
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

fn combine(mode: CombineMode, b: Array2<f64>, t: &Array2<f64>) -> Array2<f64> {
    match mode {
        CombineMode::Hadamard => b * t,
        CombineMode::Dot => b.dot(&t.t()),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    mode: CombineMode,
    grid: TimeGrid,
    branch: NetFile,
    trunk: NetFile,
    norm: NormStats,
    train_config: Option<TrainConfig>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn architecture_parsing() {
        let a: Architecture = "200x3".parse().unwrap();
        assert_eq!(a.hidden, vec![200, 200, 200]);
        let a: Architecture = "200*2-300-200*2".parse().unwrap();
        assert_eq!(a.hidden, vec![200, 200, 300, 200, 200]);
        assert_eq!(a.to_string(), "200x2-300-200x2");
        assert_eq!("200".parse::<Architecture>().unwrap().hidden, vec![200]);
        assert!("".parse::<Architecture>().is_err());
        assert!("0x2".parse::<Architecture>().is_err());
        assert!("20xq".parse::<Architecture>().is_err());
    }

    #[test]
    fn mse_examples() {
        let t = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(mse_loss(t.view(), t.view()).unwrap(), 0.0);
        assert_eq!(mse_loss((&t + 1.0).view(), t.view()).unwrap(), 1.0);
        assert_eq!(mse_loss(array![[0.0, 0.0]].view(), array![[3.0, 4.0]].view()).unwrap(), 12.5);
        assert!(mse_loss(t.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn hadamard_with_unit_trunk_returns_branch() {
        let g = small_grid(3);
        let branch = DenseNet::init(&[3, 4, 3], 1).unwrap();
        let mut trunk = DenseNet::zeros(&[3, 2, 3]).unwrap();
        trunk.biases[1].fill(1.0);
        let m = DnoModel::new(CombineMode::Hadamard, g, branch.clone(), trunk, NormStats::default()).unwrap();
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]];
        assert_eq!(m.forward(x.view()).unwrap(), branch.forward(x.view()).unwrap());

        let zero_branch = DenseNet::zeros(&[3, 4, 3]).unwrap();
        let m2 = DnoModel::new(CombineMode::Hadamard, g, zero_branch, m.trunk.clone(), NormStats::default()).unwrap();
        assert!(m2.forward(x.view()).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dot_rank_one_constant() {
        let g = small_grid(5);
        let mut branch = DenseNet::zeros(&[5, 3, 1]).unwrap();
        branch.biases[1].fill(2.0);
        let mut trunk = DenseNet::zeros(&[1, 3, 1]).unwrap();
        trunk.biases[1].fill(-1.5);
        let m = DnoModel::new(CombineMode::Dot, g, branch, trunk, NormStats::default()).unwrap();
        let x = Array2::from_elem((4, 5), 0.3);
        let u = m.forward(x.view()).unwrap();
        assert_eq!(u.dim(), (4, 5));
        assert!(u.iter().all(|v| *v == -3.0));
    }

    #[test]
    fn shape_contracts_are_enforced() {
        let g = small_grid(4);
        let bad = DnoModel::new(
            CombineMode::Hadamard,
            g,
            DenseNet::zeros(&[4, 3, 4]).unwrap(),
            DenseNet::zeros(&[1, 3, 4]).unwrap(),
            NormStats::default(),
        );
        assert!(bad.is_err());
        let bad = DnoModel::new(
            CombineMode::Dot,
            g,
            DenseNet::zeros(&[4, 3, 2]).unwrap(),
            DenseNet::zeros(&[1, 3, 3]).unwrap(),
            NormStats::default(),
        );
        assert!(bad.is_err());
        let m = DnoModel::init(CombineMode::Dot, g, &"8".parse().unwrap(), 3, NormStats::default(), 0).unwrap();
        assert!(m.forward(Array2::zeros((2, 5)).view()).is_err());
        let h = DnoModel::init(CombineMode::Hadamard, g, &"8".parse().unwrap(), 3, NormStats::default(), 0).unwrap();
        assert!(matches!(
            h.forward_points(Array2::zeros((1, 4)).view(), array![0.0].view()),
            Err(Error::InvalidMode { .. })
        ));
    }

    #[test]
    fn normalization_round_trip() {
        let x = array![[1e-3, -2e-3, 0.5e-3], [0.0, 3e-3, -1e-3]];
        let y = array![[1.0, 2.0, 3.0], [-4.0, 5.0, 0.25]];
        let n = NormStats::fit(x.view(), y.view());
        let back = n.denormalize_outputs(n.normalize_outputs(y.view()).view());
        for (a, b) in back.iter().zip(y.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let z = n.normalize_inputs(x.view());
        assert!(z.mean().unwrap().abs() < 1e-12);
        // degenerate data falls back to unit scale
        let c = NormStats::fit(Array2::zeros((2, 2)).view(), Array2::zeros((2, 2)).view());
        assert_eq!(c.input_std, 1.0);
        assert_eq!(c.output_std, 1.0);
    }

    #[test]
    fn model_json_round_trip() {
        let g = small_grid(6);
        let mut m = DnoModel::init(CombineMode::Dot, g, &"7x2".parse().unwrap(), 4, NormStats::default(), 5).unwrap();
        m.norm.output_std = 0.1234567890123456789;
        let back = DnoModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());
    }
}
