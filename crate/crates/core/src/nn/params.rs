//! Network shape and flat parameter storage.
//!
//! Parameters live in one contiguous `Vec<f64>` so that the update rules of
//! the meta-learner (axpy, dot products, norms) are plain slice loops. The
//! layout is, layer by layer, the row-major weight matrix `(out, in)`
//! followed by the bias vector `(out)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// First derivative, written in terms of the pre-activation `z` and the
    /// activation value `a = apply(z)`.
    #[inline]
    pub(crate) fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    #[inline]
    pub(crate) fn second_derivative(self, _z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::Tanh => -2.0 * a * (1.0 - a * a),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => f.write_str("relu"),
            Activation::Tanh => f.write_str("tanh"),
        }
    }
}

/// Shape of a fully connected classifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpArchitecture {
    input_dim: usize,
    hidden_widths: Vec<usize>,
    output_dim: usize,
    activation: Activation,
}

pub const DEFAULT_HIDDEN_WIDTHS: [usize; 3] = [80, 80, 80];

impl MlpArchitecture {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Argument("input_dim must be >= 1".into()));
        }
        if output_dim == 0 {
            return Err(Error::Argument("output_dim must be >= 1".into()));
        }
        if let Some(pos) = hidden_widths.iter().position(|&w| w == 0) {
            return Err(Error::Argument(format!(
                "hidden layer {pos} has width 0; all widths must be >= 1"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_widths,
            output_dim,
            activation,
        })
    }

    /// Three hidden layers of 80 units with ReLU.
    pub fn with_default_hidden(input_dim: usize, output_dim: usize) -> Result<Self> {
        Self::new(
            input_dim,
            DEFAULT_HIDDEN_WIDTHS.to_vec(),
            output_dim,
            Activation::Relu,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    /// `(fan_in, fan_out)` of every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.num_layers());
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(i, o)| i * o + o)
            .sum()
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.num_layers());
        let mut at = 0;
        for (i, o) in self.layer_dims() {
            offsets.push(at);
            at += i * o + o;
        }
        offsets
    }
}

/// Borrowed view of one dense layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerRef<'a> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

#[derive(Debug)]
pub struct LayerMut<'a> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: &'a mut [f64],
    pub bias: &'a mut [f64],
}

/// Weights and biases of an MLP, or any vector with the same shape
/// (gradients, Hessian-vector products, search directions).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    arch: MlpArchitecture,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl MlpParameters {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        Self {
            offsets: arch.layer_offsets(),
            values: vec![0.0; arch.parameter_count()],
            arch: arch.clone(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            offsets: self.offsets.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    /// Builds parameters from per-layer `(row-major weights, bias)` pairs.
    pub fn from_layers(arch: &MlpArchitecture, layers: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let dims = arch.layer_dims();
        if layers.len() != dims.len() {
            return Err(Error::Shape(format!(
                "architecture has {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        let mut values = Vec::with_capacity(arch.parameter_count());
        for (l, ((w, b), (fan_in, fan_out))) in layers.into_iter().zip(dims).enumerate() {
            if w.len() != fan_in * fan_out {
                return Err(Error::Shape(format!(
                    "layer {l}: expected {fan_out}x{fan_in} = {} weights, got {}",
                    fan_in * fan_out,
                    w.len()
                )));
            }
            if b.len() != fan_out {
                return Err(Error::Shape(format!(
                    "layer {l}: expected {fan_out} biases, got {}",
                    b.len()
                )));
            }
            values.extend(w);
            values.extend(b);
        }
        Self::from_flat(arch, values)
    }

    /// Builds parameters from the flat layout described in the module docs.
    pub fn from_flat(arch: &MlpArchitecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.parameter_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                arch.parameter_count(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "parameter {pos} is not finite ({})",
                values[pos]
            )));
        }
        Ok(Self {
            offsets: arch.layer_offsets(),
            arch: arch.clone(),
            values,
        })
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn layer(&self, index: usize) -> LayerRef<'_> {
        let (in_dim, out_dim) = self.arch.layer_dims()[index];
        let start = self.offsets[index];
        let (weights, rest) = self.values[start..].split_at(in_dim * out_dim);
        LayerRef {
            in_dim,
            out_dim,
            weights,
            bias: &rest[..out_dim],
        }
    }

    pub fn layer_mut(&mut self, index: usize) -> LayerMut<'_> {
        let (in_dim, out_dim) = self.arch.layer_dims()[index];
        let start = self.offsets[index];
        let (weights, rest) = self.values[start..].split_at_mut(in_dim * out_dim);
        LayerMut {
            in_dim,
            out_dim,
            weights,
            bias: &mut rest[..out_dim],
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerRef<'_>> + '_ {
        (0..self.arch.num_layers()).map(move |l| self.layer(l))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn assert_same_shape(&self, other: &Self) {
        assert_eq!(
            self.values.len(),
            other.values.len(),
            "parameter vectors of different shapes"
        );
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &Self) {
        self.assert_same_shape(other);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.assert_same_shape(other);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Uniform fan-based (Glorot) initialization: every weight of a layer is
/// drawn from `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`, biases are
/// zero. The same seed always produces the same parameters.
pub fn init_parameters(arch: &MlpArchitecture, seed: u64) -> MlpParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParameters::zeros(arch);
    for l in 0..arch.num_layers() {
        let layer = params.layer_mut(l);
        let bound = glorot_bound(layer.in_dim, layer.out_dim);
        for w in layer.weights.iter_mut() {
            *w = rng.random_range(-bound..=bound);
        }
    }
    params
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> MlpArchitecture {
        MlpArchitecture::new(4, vec![6, 5], 3, Activation::Relu).unwrap()
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = init_parameters(&arch(), 7);
        let b = init_parameters(&arch(), 7);
        assert_eq!(a.as_slice(), b.as_slice());
        let c = init_parameters(&arch(), 8);
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn init_respects_bound_and_zero_bias() {
        let p = init_parameters(&MlpArchitecture::with_default_hidden(20, 2).unwrap(), 3);
        for layer in p.layers() {
            let bound = glorot_bound(layer.in_dim, layer.out_dim);
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn layer_views_chain() {
        let a = arch();
        assert_eq!(a.layer_dims(), vec![(4, 6), (6, 5), (5, 3)]);
        assert_eq!(a.parameter_count(), 24 + 6 + 30 + 5 + 15 + 3);
        let p = init_parameters(&a, 1);
        let total: usize = p.layers().map(|l| l.weights.len() + l.bias.len()).sum();
        assert_eq!(total, p.len());
    }

    #[test]
    fn rejects_degenerate_architecture() {
        assert!(MlpArchitecture::new(0, vec![3], 2, Activation::Relu).is_err());
        assert!(MlpArchitecture::new(3, vec![3, 0], 2, Activation::Relu).is_err());
        assert!(MlpArchitecture::new(3, vec![], 0, Activation::Relu).is_err());
        assert!(MlpArchitecture::new(3, vec![], 2, Activation::Tanh).is_ok());
    }

    #[test]
    fn from_layers_validates_shapes() {
        let a = MlpArchitecture::new(2, vec![], 2, Activation::Relu).unwrap();
        assert!(MlpParameters::from_layers(&a, vec![(vec![1.0; 4], vec![0.0; 2])]).is_ok());
        assert!(matches!(
            MlpParameters::from_layers(&a, vec![(vec![1.0; 3], vec![0.0; 2])]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            MlpParameters::from_layers(&a, vec![(vec![f64::NAN; 4], vec![0.0; 2])]),
            Err(Error::Validation(_))
        ));
    }
}
