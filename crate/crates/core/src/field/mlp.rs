use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Sinusoidal encoding `[v?, sin(2ᵏπv), cos(2ᵏπv)]` for `k = 0..degree`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    pub degree: usize,
    pub include_input: bool,
}

impl PositionalEncoding {
    pub fn new(degree: usize, include_input: bool) -> Self {
        Self { degree, include_input }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * (2 * self.degree + usize::from(self.include_input))
    }

    pub fn encode_into(&self, v: &[f64], out: &mut Vec<f64>) {
        if self.include_input {
            out.extend_from_slice(v);
        }
        let mut freq = std::f64::consts::PI;
        for _ in 0..self.degree {
            out.extend(v.iter().map(|&x| (freq * x).sin()));
            out.extend(v.iter().map(|&x| (freq * x).cos()));
            freq *= 2.0;
        }
    }

    pub fn encode(&self, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_dim(v.len()));
        self.encode_into(v, &mut out);
        out
    }

    /// Gradient wrt `v` given the gradient wrt the encoding.
    pub fn backward(&self, v: &[f64], g_out: &[f64]) -> Vec<f64> {
        let d = v.len();
        let mut g = vec![0.0; d];
        let mut offset = 0;
        if self.include_input {
            g.copy_from_slice(&g_out[..d]);
            offset = d;
        }
        let mut freq = std::f64::consts::PI;
        for _ in 0..self.degree {
            for i in 0..d {
                let (s, c) = (freq * v[i]).sin_cos();
                g[i] += freq * (c * g_out[offset + i] - s * g_out[offset + d + i]);
            }
            offset += 2 * d;
            freq *= 2.0;
        }
        g
    }
}

pub fn positional_encoding(v: &[f64], degree: usize, include_input: bool) -> Vec<f64> {
    PositionalEncoding::new(degree, include_input).encode(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Hidden layer width.
    pub width: usize,
    /// Number of linear layers, output layer included.
    pub depth: usize,
    pub position_degree: usize,
    pub time_degree: usize,
    pub time_conditioning: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { width: 256, depth: 8, position_degree: 8, time_degree: 5, time_conditioning: true }
    }
}

impl MlpConfig {
    pub fn position_encoding(&self) -> PositionalEncoding {
        PositionalEncoding::new(self.position_degree, true)
    }

    pub fn time_encoding(&self) -> PositionalEncoding {
        PositionalEncoding::new(self.time_degree, true)
    }

    pub fn input_dim(&self) -> usize {
        let t = if self.time_conditioning { self.time_encoding().output_dim(1) } else { 0 };
        self.position_encoding().output_dim(3) + t
    }

    /// `(fan_in, fan_out)` of every linear layer.
    pub fn layer_shapes(&self, output_dim: usize) -> Vec<(usize, usize)> {
        let depth = self.depth.max(1);
        (0..depth)
            .map(|l| {
                let fan_in = if l == 0 { self.input_dim() } else { self.width };
                let fan_out = if l + 1 == depth { output_dim } else { self.width };
                (fan_in, fan_out)
            })
            .collect()
    }

    pub fn weight_count(&self, output_dim: usize) -> usize {
        self.layer_shapes(output_dim).iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Plain ReLU perceptron on encoded `(x, t)`; the last layer is linear.
///
/// Weights are stored flat, layer by layer, each as a row-major
/// `fan_out × fan_in` matrix followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    shapes: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

/// Activations kept from a forward pass.
#[derive(Clone, Debug)]
pub(crate) struct MlpTape {
    position: Vec3,
    /// Input of every layer; `inputs[0]` is the encoding.
    inputs: Vec<Vec<f64>>,
    pub(crate) output: Vec<f64>,
}

impl Mlp {
    /// He-uniform hidden layers, zero biases, zero output layer.
    pub fn new(config: MlpConfig, output_dim: usize, seed: u64) -> Result<Self> {
        if config.depth == 0 || (config.depth > 1 && config.width == 0) || output_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "network needs depth ≥ 1 and positive widths (depth {}, width {})",
                config.depth, config.width
            )));
        }
        let shapes = config.layer_shapes(output_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(config.weight_count(output_dim));
        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            if l + 1 == shapes.len() {
                weights.resize(weights.len() + fan_in * fan_out, 0.0);
            } else {
                let bound = (6.0 / fan_in as f64).sqrt();
                weights.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            }
            weights.resize(weights.len() + fan_out, 0.0);
        }
        Ok(Self { config, shapes, weights })
    }

    pub fn from_weights(config: MlpConfig, output_dim: usize, weights: Vec<f64>) -> Result<Self> {
        let expected = config.weight_count(output_dim);
        if weights.len() != expected {
            return Err(Error::DimensionMismatch { what: "network weights", expected, got: weights.len() });
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::MalformedData(format!("non-finite network weight at {index}")));
        }
        Ok(Self { shapes: config.layer_shapes(output_dim), config, weights })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().map_or(0, |s| s.1)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn encode(&self, x: Vec3, t: f64) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.config.input_dim());
        self.config.position_encoding().encode_into(&x.to_array(), &mut input);
        if self.config.time_conditioning {
            self.config.time_encoding().encode_into(&[t], &mut input);
        }
        input
    }

    pub(crate) fn forward(&self, x: Vec3, t: f64) -> MlpTape {
        let mut inputs = Vec::with_capacity(self.shapes.len());
        let mut a = self.encode(x, t);
        let mut offset = 0;
        for (l, &(fan_in, fan_out)) in self.shapes.iter().enumerate() {
            let w = &self.weights[offset..offset + fan_in * fan_out];
            let b = &self.weights[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let last = l + 1 == self.shapes.len();
            let z: Vec<f64> = w
                .chunks_exact(fan_in)
                .zip(b)
                .map(|(row, bias)| {
                    let s = bias + row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>();
                    if last { s } else { s.max(0.0) }
                })
                .collect();
            inputs.push(std::mem::replace(&mut a, z));
        }
        MlpTape { position: x, inputs, output: a }
    }

    pub fn eval(&self, x: Vec3, t: f64) -> Vec<f64> {
        self.forward(x, t).output
    }

    /// Accumulates weight gradients into `grad` and returns the gradient
    /// wrt the queried position.
    pub(crate) fn backward(&self, tape: &MlpTape, g_out: &[f64], grad: &mut [f64]) -> Result<Vec3> {
        if g_out.len() != self.output_dim() {
            return Err(Error::DimensionMismatch { what: "output gradient", expected: self.output_dim(), got: g_out.len() });
        }
        if grad.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { what: "gradient buffer", expected: self.weights.len(), got: grad.len() });
        }
        let mut offsets = Vec::with_capacity(self.shapes.len());
        let mut offset = 0;
        for &(fan_in, fan_out) in &self.shapes {
            offsets.push(offset);
            offset += fan_in * fan_out + fan_out;
        }
        let mut gz = g_out.to_vec();
        for l in (0..self.shapes.len()).rev() {
            let (fan_in, fan_out) = self.shapes[l];
            let off = offsets[l];
            let a = &tape.inputs[l];
            let w = &self.weights[off..off + fan_in * fan_out];
            {
                let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for (o, &g) in gz.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    for (gwi, ai) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(a) {
                        *gwi += g * ai;
                    }
                }
            }
            let mut ga = vec![0.0; fan_in];
            for (o, &g) in gz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (gai, wi) in ga.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *gai += g * wi;
                }
            }
            if l > 0 {
                // `a` is a ReLU output, so it is positive exactly where the unit was active.
                for (gai, ai) in ga.iter_mut().zip(a) {
                    if *ai <= 0.0 {
                        *gai = 0.0;
                    }
                }
            }
            gz = ga;
        }
        let pe = self.config.position_encoding();
        let gx = pe.backward(&tape.position.to_array(), &gz[..pe.output_dim(3)]);
        Ok(Vec3::from_slice(&gx))
    }

    /// Pre-activations of every hidden unit, for tests that avoid ReLU kinks.
    #[cfg(test)]
    pub(crate) fn hidden_preactivations(&self, x: Vec3, t: f64) -> Vec<f64> {
        let tape = self.forward(x, t);
        let mut out = Vec::new();
        let mut offset = 0;
        for (l, &(fan_in, fan_out)) in self.shapes.iter().enumerate() {
            if l + 1 == self.shapes.len() {
                break;
            }
            let w = &self.weights[offset..offset + fan_in * fan_out];
            let b = &self.weights[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            for (row, bias) in w.chunks_exact(fan_in).zip(b) {
                out.push(bias + row.iter().zip(&tape.inputs[l]).map(|(wi, ai)| wi * ai).sum::<f64>());
            }
        }
        out
    }
}
