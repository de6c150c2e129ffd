use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub const MLP_SCHEMA: &str = "aimrom.mlp/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if let Activation::Tanh = self {
            z.mapv_inplace(f64::tanh);
        }
    }
}

/// Per-feature affine standardization `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Column means and standard deviations of `x`; constant columns get unit scale.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let scale = (0..x.ncols())
            .map(|j| {
                let var = x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 * (1.0 + mean[j].abs()) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            mean: mean.to_vec(),
            scale,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    pub fn inverse(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let mut out = z.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.scale[j] + self.mean[j];
            }
        }
        out
    }
}

/// Layered affine maps with per-layer activation. Hidden layers use `tanh`
/// and the output layer is linear unless built otherwise (autoencoders keep
/// a linear bottleneck inside the chain).
///
/// Optional standardizers wrap the raw network: inputs are standardized
/// before the first layer and outputs de-standardized after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    /// `weights[l]` has shape `(layer_sizes[l+1], layer_sizes[l])`.
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    activations: Vec<Activation>,
    pub(crate) input_scaler: Option<Standardizer>,
    pub(crate) output_scaler: Option<Standardizer>,
}

/// Parameter gradients, shaped like the network's weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Intermediate activations of a batched forward pass in raw network units.
pub(crate) struct ForwardCache {
    /// `activations[0]` is the standardized input; `activations[l+1]` the output of layer `l`.
    pub activations: Vec<Array2<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights `U(±√(6/(fan_in+fan_out)))` and zero biases,
    /// `tanh` on hidden layers and a linear output layer.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let n_layers = layer_sizes.len().saturating_sub(1);
        let mut activations = vec![Activation::Tanh; n_layers];
        if let Some(last) = activations.last_mut() {
            *last = Activation::Identity;
        }
        Self::with_activations(layer_sizes, &activations, seed)
    }

    pub fn with_activations(layer_sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput(
                "an MLP needs at least an input and an output layer of positive width".into(),
            ));
        }
        check_len("activations", layer_sizes.len() - 1, activations.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-limit..limit)));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activations: activations.to_vec(),
            input_scaler: None,
            output_scaler: None,
        })
    }

    /// Builds a network from explicit parameters.
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() || weights.len() != activations.len() {
            return Err(Error::InvalidInput("inconsistent layer parameter counts".into()));
        }
        let mut layer_sizes = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            check_len("layer input width", layer_sizes[l], w.ncols())?;
            check_len("bias length", w.nrows(), b.len())?;
            layer_sizes.push(w.nrows());
        }
        let mlp = Self {
            layer_sizes,
            weights,
            biases,
            activations,
            input_scaler: None,
            output_scaler: None,
        };
        mlp.check_finite()?;
        Ok(mlp)
    }

    pub fn with_scalers(mut self, input: Option<Standardizer>, output: Option<Standardizer>) -> Result<Self> {
        if let Some(s) = &input {
            check_len("input scaler", self.input_dim(), s.mean.len())?;
        }
        if let Some(s) = &output {
            check_len("output scaler", self.output_dim(), s.mean.len())?;
        }
        self.input_scaler = input;
        self.output_scaler = output;
        Ok(self)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn input_scaler(&self) -> Option<&Standardizer> {
        self.input_scaler.as_ref()
    }

    pub fn output_scaler(&self) -> Option<&Standardizer> {
        self.output_scaler.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        let finite = self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if finite {
            Ok(())
        } else {
            Err(Error::Numerical("non-finite network parameter".into()))
        }
    }

    /// Splits the layer stack at `at`: layers `..at` and `at..`.
    pub(crate) fn split(&self, at: usize) -> (Mlp, Mlp) {
        let head = Mlp {
            layer_sizes: self.layer_sizes[..=at].to_vec(),
            weights: self.weights[..at].to_vec(),
            biases: self.biases[..at].to_vec(),
            activations: self.activations[..at].to_vec(),
            input_scaler: self.input_scaler.clone(),
            output_scaler: None,
        };
        let tail = Mlp {
            layer_sizes: self.layer_sizes[at..].to_vec(),
            weights: self.weights[at..].to_vec(),
            biases: self.biases[at..].to_vec(),
            activations: self.activations[at..].to_vec(),
            input_scaler: None,
            output_scaler: self.output_scaler.clone(),
        };
        (head, tail)
    }

    pub(crate) fn standardize_inputs(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match &self.input_scaler {
            Some(s) => s.transform(x),
            None => x.to_owned(),
        }
    }

    pub(crate) fn destandardize_outputs(&self, z: Array2<f64>) -> Array2<f64> {
        match &self.output_scaler {
            Some(s) => s.inverse(z.view()),
            None => z,
        }
    }

    /// Raw network on already standardized inputs, keeping every layer's output.
    pub(crate) fn forward_cached(&self, xs: Array2<f64>) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(xs);
        for l in 0..self.weights.len() {
            let mut z = activations[l].dot(&self.weights[l].t());
            z += &self.biases[l];
            self.activations[l].apply(&mut z);
            activations.push(z);
        }
        ForwardCache { activations }
    }

    /// Reverse-mode sweep: given `∂L/∂(raw output)` for the cached batch,
    /// returns parameter gradients and `∂L/∂(standardized input)`.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> (Gradients, Array2<f64>) {
        let n_layers = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        let mut delta = d_out;
        for l in (0..n_layers).rev() {
            if let Activation::Tanh = self.activations[l] {
                let h = &cache.activations[l + 1];
                ndarray::Zip::from(&mut delta).and(h).for_each(|d, &h| *d *= 1.0 - h * h);
            }
            gw[l] = delta.t().dot(&cache.activations[l]);
            gb[l] = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.weights[l]);
        }
        (
            Gradients {
                weights: gw,
                biases: gb,
            },
            delta,
        )
    }

    /// Batched evaluation; rows of `x` are samples.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("network input", self.input_dim(), x.ncols())?;
        let xs = self.standardize_inputs(x);
        let cache = self.forward_cached(xs);
        let out = cache.activations.into_iter().last().expect("output layer");
        Ok(self.destandardize_outputs(out))
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let x2 = x.insert_axis(Axis(0));
        Ok(self.forward_batch(x2)?.index_axis_move(Axis(0), 0))
    }

    pub fn to_document(&self, seed: u64, metadata: BTreeMap<String, String>) -> MlpDocument {
        MlpDocument {
            schema: MLP_SCHEMA.to_string(),
            layer_sizes: self.layer_sizes.clone(),
            activations: self.activations.clone(),
            layers: self
                .weights
                .iter()
                .zip(&self.biases)
                .map(|(w, b)| LayerDocument {
                    weights: w.iter().copied().collect(),
                    biases: b.to_vec(),
                })
                .collect(),
            input_scaler: self.input_scaler.clone(),
            output_scaler: self.output_scaler.clone(),
            seed,
            metadata,
        }
    }

    pub fn from_document(doc: &MlpDocument) -> Result<Self> {
        if doc.schema != MLP_SCHEMA {
            return Err(Error::InvalidInput(format!(
                "unsupported network schema '{}', expected '{MLP_SCHEMA}'",
                doc.schema
            )));
        }
        check_len("layer documents", doc.layer_sizes.len().saturating_sub(1), doc.layers.len())?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, layer) in doc.layers.iter().enumerate() {
            let shape = (doc.layer_sizes[l + 1], doc.layer_sizes[l]);
            let w = Array2::from_shape_vec(shape, layer.weights.clone())
                .map_err(|e| Error::InvalidInput(format!("layer {l} weights: {e}")))?;
            weights.push(w);
            biases.push(Array1::from(layer.biases.clone()));
        }
        Self::from_parts(weights, biases, doc.activations.clone())?
            .with_scalers(doc.input_scaler.clone(), doc.output_scaler.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    /// Row-major `(fan_out, fan_in)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Serialized form of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpDocument {
    pub schema: String,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub layers: Vec<LayerDocument>,
    pub input_scaler: Option<Standardizer>,
    pub output_scaler: Option<Standardizer>,
    pub seed: u64,
    pub metadata: BTreeMap<String, String>,
}

/// Gradient of `‖forward(x) − y_target‖²` with respect to every parameter.
pub fn gradient(mlp: &Mlp, x: ArrayView1<f64>, y_target: ArrayView1<f64>) -> Result<Gradients> {
    check_len("network input", mlp.input_dim(), x.len())?;
    check_len("gradient target", mlp.output_dim(), y_target.len())?;
    let xs = mlp.standardize_inputs(x.insert_axis(Axis(0)));
    let cache = mlp.forward_cached(xs);
    let raw = cache.activations.last().expect("output layer").row(0).to_owned();
    let scale = mlp
        .output_scaler
        .as_ref()
        .map(|s| s.scale.clone())
        .unwrap_or_else(|| vec![1.0; mlp.output_dim()]);
    let mean = mlp
        .output_scaler
        .as_ref()
        .map(|s| s.mean.clone())
        .unwrap_or_else(|| vec![0.0; mlp.output_dim()]);
    let d_out = Array2::from_shape_fn((1, mlp.output_dim()), |(_, j)| {
        let y = raw[j] * scale[j] + mean[j];
        2.0 * (y - y_target[j]) * scale[j]
    });
    Ok(mlp.backward(&cache, d_out).0)
}

/// Exact Jacobian `∂forward/∂x` at `x`, shape `(output_dim, input_dim)`.
///
/// Accumulated from the output side, `R ← R · diag(σ'(z_l)) · W_l`, which is
/// a reverse-mode sweep for all outputs at once.
pub fn jacobian(mlp: &Mlp, x: ArrayView1<f64>) -> Result<Array2<f64>> {
    check_len("network input", mlp.input_dim(), x.len())?;
    let xs = mlp.standardize_inputs(x.insert_axis(Axis(0)));
    let cache = mlp.forward_cached(xs);
    let n_layers = mlp.weights.len();
    let mut r = Array2::<f64>::eye(mlp.output_dim());
    for l in (0..n_layers).rev() {
        if let Activation::Tanh = mlp.activations[l] {
            let h = cache.activations[l + 1].row(0);
            for (j, mut col) in r.columns_mut().into_iter().enumerate() {
                col *= 1.0 - h[j] * h[j];
            }
        }
        r = r.dot(&mlp.weights[l]);
    }
    if let Some(s) = &mlp.output_scaler {
        for (i, mut row) in r.rows_mut().into_iter().enumerate() {
            row *= s.scale[i];
        }
    }
    if let Some(s) = &mlp.input_scaler {
        for (j, mut col) in r.columns_mut().into_iter().enumerate() {
            col /= s.scale[j];
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn flatten(g: &Gradients) -> Vec<f64> {
        g.weights
            .iter()
            .flat_map(|w| w.iter().copied().collect::<Vec<_>>())
            .chain(g.biases.iter().flat_map(|b| b.to_vec()))
            .collect()
    }

    fn perturbed(mlp: &Mlp, idx: usize, h: f64) -> Mlp {
        let mut m = mlp.clone();
        let mut k = idx;
        for w in m.weights.iter_mut() {
            if k < w.len() {
                let v = w.iter_mut().nth(k).unwrap();
                *v += h;
                return m;
            }
            k -= w.len();
        }
        for b in m.biases.iter_mut() {
            if k < b.len() {
                b[k] += h;
                return m;
            }
            k -= b.len();
        }
        unreachable!()
    }

    fn sq_err(mlp: &Mlp, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        let out = mlp.forward(x).unwrap();
        out.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum()
    }

    #[test]
    fn zero_weights_output_biases() {
        let w = vec![Array2::zeros((3, 2)), Array2::zeros((2, 3))];
        let b = vec![array![0.1, 0.2, 0.3], array![-1.0, 4.0]];
        let mlp = Mlp::from_parts(w, b, vec![Activation::Tanh, Activation::Identity]).unwrap();
        for x in [array![0.0, 0.0], array![5.0, -3.0]] {
            assert_eq!(mlp.forward(x.view()).unwrap(), array![-1.0, 4.0]);
        }
    }

    #[test]
    fn single_linear_layer() {
        let w = array![[1.0, 2.0], [3.0, -1.0]];
        let b = array![0.5, -0.5];
        let mlp = Mlp::from_parts(vec![w.clone()], vec![b.clone()], vec![Activation::Identity]).unwrap();
        let x = array![0.3, -0.7];
        assert_eq!(mlp.forward(x.view()).unwrap(), w.dot(&x) + &b);
        assert_eq!(jacobian(&mlp, x.view()).unwrap(), w);
    }

    #[test]
    fn one_one_one_is_tanh() {
        let mlp = Mlp::from_parts(
            vec![array![[1.0]], array![[1.0]]],
            vec![array![0.0], array![0.0]],
            vec![Activation::Tanh, Activation::Identity],
        )
        .unwrap();
        for x in [-2.0, 0.0, 0.4, 3.0] {
            assert!((mlp.forward(array![x].view()).unwrap()[0] - f64::tanh(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_jacobian_at_origin() {
        let mlp = Mlp::from_parts(
            vec![array![[0.7]], array![[-1.3]]],
            vec![array![0.0], array![0.2]],
            vec![Activation::Tanh, Activation::Identity],
        )
        .unwrap();
        let j = jacobian(&mlp, array![0.0].view()).unwrap();
        assert!((j[[0, 0]] - 0.7 * -1.3).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mlp = Mlp::new(&[3, 4, 2], 1).unwrap();
        assert!(mlp.forward(array![1.0, 2.0].view()).is_err());
        assert!(gradient(&mlp, array![1.0, 2.0, 3.0].view(), array![1.0].view()).is_err());
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        let mlp = Mlp::new(&[3, 5, 2], 4).unwrap();
        let x = array![0.2, -0.1, 0.5];
        let y = mlp.forward(x.view()).unwrap();
        let g = gradient(&mlp, x.view(), y.view()).unwrap();
        assert!(flatten(&g).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (seed, sizes) in [(1u64, vec![2, 3, 1]), (2, vec![3, 4, 4, 2]), (3, vec![1, 2, 3])] {
            let mlp = Mlp::new(&sizes, seed).unwrap();
            let x = Array1::from_iter((0..sizes[0]).map(|i| 0.3 - 0.2 * i as f64));
            let y = Array1::from_iter((0..*sizes.last().unwrap()).map(|i| 0.1 * i as f64 - 0.4));
            let g = flatten(&gradient(&mlp, x.view(), y.view()).unwrap());
            let h = 1e-6;
            for (idx, gi) in g.iter().enumerate() {
                let fd = (sq_err(&perturbed(&mlp, idx, h), x.view(), y.view())
                    - sq_err(&perturbed(&mlp, idx, -h), x.view(), y.view()))
                    / (2.0 * h);
                let rel = (gi - fd).abs() / gi.abs().max(fd.abs()).max(1e-3);
                assert!(rel < 1e-5, "param {idx}: {gi} vs {fd}");
            }
        }
    }

    #[test]
    fn linear_gradient_closed_form() {
        // ‖Wx + b − y‖² has ∂/∂W = 2 r xᵀ and ∂/∂b = 2 r
        let w = array![[1.0, -2.0], [0.5, 0.0], [0.0, 3.0]];
        let b = array![0.1, 0.2, 0.3];
        let mlp = Mlp::from_parts(vec![w.clone()], vec![b.clone()], vec![Activation::Identity]).unwrap();
        let x = array![0.4, -1.1];
        let y = array![1.0, 0.0, -2.0];
        let r = w.dot(&x) + &b - &y;
        let g = gradient(&mlp, x.view(), y.view()).unwrap();
        for i in 0..3 {
            assert!((g.biases[0][i] - 2.0 * r[i]).abs() < 1e-14);
            for j in 0..2 {
                assert!((g.weights[0][[i, j]] - 2.0 * r[i] * x[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn document_round_trip() {
        let mlp = Mlp::new(&[2, 3, 1], 9)
            .unwrap()
            .with_scalers(
                Some(Standardizer { mean: vec![1.0, 2.0], scale: vec![0.5, 3.0] }),
                Some(Standardizer { mean: vec![-1.0], scale: vec![2.0] }),
            )
            .unwrap();
        let doc = mlp.to_document(9, BTreeMap::new());
        let text = serde_json::to_string(&doc).unwrap();
        let back = Mlp::from_document(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, mlp);
        let mut bad = doc;
        bad.schema = "other/0".into();
        assert!(Mlp::from_document(&bad).is_err());
    }
}
