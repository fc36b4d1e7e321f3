//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! A network is a stack of affine layers `z = W a + b`. Hidden layers apply
//! the leaky rectifier `y = max(beta * z, z)`; the output layer applies either
//! `tanh` (policy networks) or the identity (value networks).
//!
//! All batched operations take row-major `(batch, features)` matrices.

mod file;
mod optim;

pub use file::{load_network, save_network, NetworkFile, NETWORK_FILE_VERSION};
pub use optim::{AdamState, Optimizer, OptimizerKind, RmsPropState};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Tanh,
    Linear,
}

/// Construction parameters for [`Mlp::init`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    /// Leaky rectifier slope for every hidden layer.
    pub beta: f64,
    pub output: OutputActivation,
    /// Multiplier applied to the base weight draw.
    pub weight_scale: f64,
    /// Multiplier applied to the base bias draw.
    pub bias_scale: f64,
}

impl MlpSpec {
    /// `inputs -> hidden x depth -> outputs`.
    pub fn uniform_hidden(
        inputs: usize,
        hidden: usize,
        depth: usize,
        outputs: usize,
        beta: f64,
        output: OutputActivation,
    ) -> Self {
        let mut layer_sizes = Vec::with_capacity(depth + 2);
        layer_sizes.push(inputs);
        layer_sizes.extend(std::iter::repeat_n(hidden, depth));
        layer_sizes.push(outputs);
        MlpSpec {
            layer_sizes,
            beta,
            output,
            weight_scale: 1.0,
            bias_scale: 1.0,
        }
    }

    pub fn with_scales(mut self, weight_scale: f64, bias_scale: f64) -> Self {
        self.weight_scale = weight_scale;
        self.bias_scale = bias_scale;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config("a network needs at least an input and an output layer"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("activation slope must be > 0, got {}", self.beta)));
        }
        if !(self.weight_scale > 0.0 && self.weight_scale.is_finite()) {
            return Err(Error::config(format!(
                "weight scale must be > 0, got {}",
                self.weight_scale
            )));
        }
        if !(self.bias_scale > 0.0 && self.bias_scale.is_finite()) {
            return Err(Error::config(format!(
                "bias scale must be > 0, got {}",
                self.bias_scale
            )));
        }
        Ok(())
    }
}

/// Network parameters. Layer `j` maps `layer_sizes[j]` inputs to
/// `layer_sizes[j + 1]` outputs; its weight matrix is `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    beta: f64,
    output: OutputActivation,
}

/// Gradients, shape-congruent with the [`Mlp`] they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Intermediate values retained by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Array2<f64>>,
    /// Final activations.
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

#[inline]
fn leaky(z: f64, beta: f64) -> f64 {
    z.max(beta * z)
}

/// Slope of the leaky rectifier. At exactly zero the slope is `beta`.
#[inline]
fn leaky_slope(z: f64, beta: f64) -> f64 {
    if z == 0.0 || beta * z > z {
        beta
    } else {
        1.0
    }
}

impl Mlp {
    /// Draws weights and biases uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
    /// and multiplies them by the spec's weight and bias scales.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::with_capacity(spec.layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(spec.layer_sizes.len() - 1);
        for pair in spec.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || {
                dist.sample(rng) * spec.weight_scale
            }));
            biases.push(Array1::from_shape_simple_fn(fan_out, || {
                dist.sample(rng) * spec.bias_scale
            }));
        }
        Ok(Mlp {
            layer_sizes: spec.layer_sizes.clone(),
            weights,
            biases,
            beta: spec.beta,
            output: spec.output,
        })
    }

    /// Builds a network from explicit parameters.
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        beta: f64,
        output: OutputActivation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::config("need one bias vector per weight matrix"));
        }
        if !(beta > 0.0) {
            return Err(Error::config("activation slope must be > 0"));
        }
        let mut layer_sizes = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            ensure_dim("layer input width", *layer_sizes.last().unwrap(), w.ncols())?;
            ensure_dim("bias length", w.nrows(), b.len())?;
            layer_sizes.push(w.nrows());
        }
        let net = Mlp {
            layer_sizes,
            weights,
            biases,
            beta,
            output,
        };
        if !net.is_finite() {
            return Err(Error::config("non-finite parameter"));
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    /// Inverse of [`Mlp::to_flat`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        ensure_dim("flat parameter vector", self.num_params(), flat.len())?;
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        ensure_dim("network input width", self.input_dim(), cols)
    }

    fn is_last(&self, layer: usize) -> bool {
        layer + 1 == self.weights.len()
    }

    fn activate(&self, layer: usize, z: &Array2<f64>) -> Array2<f64> {
        if self.is_last(layer) {
            match self.output {
                OutputActivation::Tanh => z.mapv(f64::tanh),
                OutputActivation::Linear => z.clone(),
            }
        } else {
            let beta = self.beta;
            z.mapv(|v| leaky(v, beta))
        }
    }

    /// Batched forward pass without retaining intermediates.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut a = input.to_owned();
        for (j, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(&w.t()) + b;
            a = self.activate(j, &z);
        }
        Ok(a)
    }

    /// Single-sample forward pass.
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::config(e.to_string()))?;
        Ok(self.predict(x)?.into_raw_vec_and_offset().0)
    }

    /// Batched forward pass that keeps what [`Mlp::backward`] needs.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(input.ncols())?;
        let layers = self.weights.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = input.to_owned();
        for (j, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(&w.t()) + b;
            let next = self.activate(j, &z);
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: a,
        })
    }

    fn check_cache(&self, cache: &ForwardCache, cotangent: &ArrayView2<f64>) -> Result<()> {
        ensure_dim("cache depth", self.weights.len(), cache.pre.len())?;
        for (j, z) in cache.pre.iter().enumerate() {
            ensure_dim("cached layer width", self.layer_sizes[j + 1], z.ncols())?;
        }
        ensure_dim("cotangent rows", cache.output.nrows(), cotangent.nrows())?;
        ensure_dim("cotangent width", self.output_dim(), cotangent.ncols())
    }

    /// Cotangent of the pre-activation of layer `j` from the cotangent of its output.
    fn pre_cotangent(&self, j: usize, cache: &ForwardCache, upstream: Array2<f64>) -> Array2<f64> {
        let mut dz = upstream;
        if self.is_last(j) {
            if self.output == OutputActivation::Tanh {
                dz.zip_mut_with(&cache.output, |d, &y| *d *= 1.0 - y * y);
            }
        } else {
            let beta = self.beta;
            dz.zip_mut_with(&cache.pre[j], |d, &z| *d *= leaky_slope(z, beta));
        }
        dz
    }

    /// Reverse-mode pass. Returns parameter gradients (summed over the batch)
    /// and the cotangent with respect to the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_cotangent: ArrayView2<f64>,
    ) -> Result<(ParamGrads, Array2<f64>)> {
        self.check_cache(cache, &output_cotangent)?;
        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        let mut upstream = output_cotangent.to_owned();
        for j in (0..layers).rev() {
            let dz = self.pre_cotangent(j, cache, upstream);
            gw.push(dz.t().dot(&cache.inputs[j]));
            gb.push(dz.sum_axis(Axis(0)));
            upstream = dz.dot(&self.weights[j]);
        }
        gw.reverse();
        gb.reverse();
        Ok((
            ParamGrads {
                weights: gw,
                biases: gb,
            },
            upstream,
        ))
    }

    /// Like [`Mlp::backward`] but only propagates to the input.
    pub fn backward_input(
        &self,
        cache: &ForwardCache,
        output_cotangent: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_cache(cache, &output_cotangent)?;
        let mut upstream = output_cotangent.to_owned();
        for j in (0..self.weights.len()).rev() {
            let dz = self.pre_cotangent(j, cache, upstream);
            upstream = dz.dot(&self.weights[j]);
        }
        Ok(upstream)
    }

    /// `self <- (1 - tau) * self + tau * online`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::config(format!("soft update factor must be in [0, 1], got {tau}")));
        }
        if self.layer_sizes != online.layer_sizes {
            return Err(Error::config("soft update between differently shaped networks"));
        }
        let keep = 1.0 - tau;
        for (t, o) in self.weights.iter_mut().zip(&online.weights) {
            t.zip_mut_with(o, |t, &o| *t = keep * *t + tau * o);
        }
        for (t, o) in self.biases.iter_mut().zip(&online.biases) {
            t.zip_mut_with(o, |t, &o| *t = keep * *t + tau * o);
        }
        Ok(())
    }

    /// Euclidean distance between two congruent parameter sets.
    pub fn distance(&self, other: &Mlp) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl ParamGrads {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn congruent_with(&self, net: &Mlp) -> bool {
        self.weights.len() == net.weights.len()
            && self.weights.iter().zip(&net.weights).all(|(g, w)| g.dim() == w.dim())
            && self.biases.iter().zip(&net.biases).all(|(g, b)| g.len() == b.len())
    }
}

/// Row-wise concatenation `[left | right]`.
pub fn hconcat(left: ArrayView2<f64>, right: ArrayView2<f64>) -> Result<Array2<f64>> {
    ndarray::concatenate(Axis(1), &[left, right]).map_err(|e| Error::config(e.to_string()))
}

/// Stacks equal-length rows into a matrix.
pub fn stack_rows<'a, I>(rows: I, width: usize) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut flat = Vec::new();
    let mut n = 0;
    for r in rows {
        ensure_dim("row width", width, r.len())?;
        flat.extend_from_slice(r);
        n += 1;
    }
    Array2::from_shape_vec((n, width), flat).map_err(|e| Error::config(e.to_string()))
}

pub fn row_view(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, v.len()), v).expect("row view")
}

pub fn vec_view(v: &[f64]) -> ArrayView1<'_, f64> {
    ArrayView1::from(v)
}
