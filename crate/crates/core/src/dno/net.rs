use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// Layer `l` maps row vectors as `x W_l + b_l` with `W_l` of shape
/// `(dims[l], dims[l + 1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Layer inputs recorded by a forward pass, consumed by [`DenseNet::backward`].
pub(crate) struct Tape {
    inputs: Vec<Array2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl NetGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice().expect("standard layout"), b.as_slice().expect("contiguous")])
            .collect()
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid(format!("a network needs at least 2 layer sizes, got {dims:?}")));
    }
    if dims.contains(&0) {
        return Err(Error::invalid(format!("layer sizes must be positive, got {dims:?}")));
    }
    Ok(())
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = rng::seeded(seed);
        let weights = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-limit..limit))
            })
            .collect();
        let biases = dims[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(DenseNet {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(DenseNet {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: dims[1..].iter().map(|&n| Array1::zeros(n)).collect(),
        })
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::shape("weights and biases must be non-empty and paired"));
        }
        let mut dims = vec![weights[0].nrows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != dims[l] || b.len() != w.ncols() {
                return Err(Error::shape(format!("layer {l} has inconsistent shapes")));
            }
            dims.push(w.ncols());
        }
        check_dims(&dims)?;
        let net = DenseNet {
            dims,
            weights: weights.into_iter().map(|w| w.as_standard_layout().into_owned()).collect(),
            biases,
        };
        if net.param_slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("network parameters must be finite"));
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut a = x.to_owned();
        let last = self.n_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = affine(a.view(), w, b);
            if l < last {
                a.mapv_inplace(f64::tanh);
            }
        }
        Ok(a)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::shape(e.to_string()))?;
        Ok(self.forward(row)?.into_raw_vec_and_offset().0)
    }

    pub(crate) fn forward_taped(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut a = x.to_owned();
        let last = self.n_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = affine(a.view(), w, b);
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            inputs.push(a);
            a = z;
        }
        Ok((a, Tape { inputs }))
    }

    /// Gradients of a scalar loss given its derivative `d_out` with respect
    /// to the network output of the taped pass.
    pub(crate) fn backward(&self, tape: &Tape, d_out: Array2<f64>) -> NetGrads {
        let n = self.n_layers();
        let mut weights = vec![Array2::zeros((0, 0)); n];
        let mut biases = vec![Array1::zeros(0); n];
        let mut dz = d_out;
        for l in (0..n).rev() {
            let a = &tape.inputs[l];
            weights[l] = a.t().dot(&dz).as_standard_layout().into_owned();
            biases[l] = dz.sum_axis(Axis(0));
            if l > 0 {
                let mut da = dz.dot(&self.weights[l].t());
                // a is tanh of the previous pre-activation
                ndarray::Zip::from(&mut da).and(a).for_each(|d, &y| *d *= 1.0 - y * y);
                dz = da;
            }
        }
        NetGrads { weights, biases }
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice().expect("standard layout"), b.as_slice().expect("contiguous")])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| {
                [
                    w.as_slice_mut().expect("standard layout"),
                    b.as_slice_mut().expect("contiguous"),
                ]
            })
            .collect()
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }
}

fn affine(x: ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut z = x.dot(w);
    z += b;
    z
}

/// Serialized form: row-major weights of shape `(fan_in, fan_out)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetFile {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&DenseNet> for NetFile {
    fn from(net: &DenseNet) -> Self {
        NetFile {
            layer_dims: net.dims.clone(),
            weights: net.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: net.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }
}

impl TryFrom<NetFile> for DenseNet {
    type Error = Error;

    fn try_from(file: NetFile) -> Result<Self> {
        check_dims(&file.layer_dims)?;
        let n = file.layer_dims.len() - 1;
        if file.weights.len() != n || file.biases.len() != n {
            return Err(Error::shape(format!("expected {n} weight and bias arrays")));
        }
        let mut weights = Vec::with_capacity(n);
        for (l, w) in file.weights.into_iter().enumerate() {
            let shape = (file.layer_dims[l], file.layer_dims[l + 1]);
            weights.push(
                Array2::from_shape_vec(shape, w)
                    .map_err(|e| Error::shape(format!("layer {l} weights: {e}")))?,
            );
        }
        let biases = file.biases.into_iter().map(Array1::from_vec).collect();
        let net = DenseNet::from_parts(weights, biases)?;
        if net.dims != file.layer_dims {
            return Err(Error::shape("layer_dims disagree with the arrays"));
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = DenseNet::init(&[101, 200, 101], 3).unwrap();
        let b = DenseNet::init(&[101, 200, 101], 3).unwrap();
        assert_eq!(a, b);
        assert!(a.biases.iter().all(|b| b.iter().all(|v| *v == 0.0)));
        let limit = (6.0f64 / 301.0).sqrt();
        assert!(a.weights[0].iter().all(|w| w.abs() <= limit));
        assert_ne!(a, DenseNet::init(&[101, 200, 101], 4).unwrap());
    }

    #[test]
    fn init_shapes_of_the_deep_architecture() {
        let net = DenseNet::init(&[101, 200, 200, 300, 200, 200, 101], 0).unwrap();
        assert_eq!(net.n_layers(), 6);
        let shapes: Vec<_> = net.weights.iter().map(|w| w.dim()).collect();
        assert_eq!(shapes, vec![(101, 200), (200, 200), (200, 300), (300, 200), (200, 200), (200, 101)]);
        assert!(DenseNet::init(&[], 0).is_err());
        assert!(DenseNet::init(&[5], 0).is_err());
    }

    #[test]
    fn identity_and_zero_networks() {
        let mut id = DenseNet::zeros(&[3, 3]).unwrap();
        id.weights[0] = Array2::eye(3);
        let x = array![[0.5, -1.0, 2.0]];
        assert_eq!(id.forward(x.view()).unwrap(), x);

        let zero = DenseNet::zeros(&[3, 8, 8, 2]).unwrap();
        assert!(zero.forward(x.view()).unwrap().iter().all(|v| *v == 0.0));
        assert!(zero.forward(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn batch_rows_are_independent() {
        let net = DenseNet::init(&[4, 7, 3], 9).unwrap();
        let x = array![[0.1, 0.2, 0.3, 0.4], [-1.0, 0.5, 0.0, 2.0]];
        let batch = net.forward(x.view()).unwrap();
        for i in 0..2 {
            let row = net.forward_vec(x.row(i).as_slice().unwrap()).unwrap();
            for (a, b) in row.iter().zip(batch.row(i).iter()) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let net = DenseNet::init(&[3, 5, 2], 1).unwrap();
        let file = NetFile::from(&net);
        let json = serde_json::to_string(&file).unwrap();
        let back: DenseNet = serde_json::from_str::<NetFile>(&json).unwrap().try_into().unwrap();
        assert_eq!(back, net);
    }
}
