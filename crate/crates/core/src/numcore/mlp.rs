//! Small dense multilayer perceptrons with scalar output.
//!
//! Each hidden layer computes `act(W h + b)`; the output layer is affine with a
//! single unit. Parameters are laid out layer by layer, weights row-major
//! (`out x in`) followed by the bias vector, which is the order used by
//! [`Mlp::write_params`] and by the gradient accumulators.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Rng;
use crate::error::{Error, Result};

pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// Leaky ReLU with the given negative-side slope.
    LeakyRelu(f64),
    Identity,
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu(DEFAULT_NEGATIVE_SLOPE)
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and output `a`. At exactly zero
    /// the leaky ReLU takes its negative-side slope.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::LeakyRelu(_) => "leaky_relu",
            Activation::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major, `outputs x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Weight matrix as rows (one per output unit).
    pub fn weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights
            .chunks(self.inputs)
            .map(|r| r.to_vec())
            .collect()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// A scalar-output feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    layers: Vec<Dense>,
    activation: Activation,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid(
            "an mlp needs at least an input and an output width",
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::invalid("layer widths must be positive"));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::invalid("mlp output width must be exactly 1"));
    }
    Ok(())
}

impl Mlp {
    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self { layers, activation })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(layer_sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activation)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    /// Build from explicit `(weight rows, bias)` pairs, input layer first.
    pub fn from_layers(layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an mlp needs at least one layer"));
        }
        let mut dense = Vec::with_capacity(layers.len());
        for (idx, (rows, bias)) in layers.into_iter().enumerate() {
            let outputs = rows.len();
            let inputs = rows.first().map(Vec::len).unwrap_or(0);
            if outputs == 0 || inputs == 0 {
                return Err(Error::invalid(format!("layer {idx} has an empty weight matrix")));
            }
            if rows.iter().any(|r| r.len() != inputs) {
                return Err(Error::invalid(format!("layer {idx} has ragged weight rows")));
            }
            if bias.len() != outputs {
                return Err(Error::invalid(format!(
                    "layer {idx} bias has length {} but the layer has {outputs} outputs",
                    bias.len()
                )));
            }
            dense.push(Dense {
                inputs,
                outputs,
                weights: rows.into_iter().flatten().collect(),
                bias,
            });
        }
        for (idx, pair) in dense.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::invalid(format!(
                    "layer {idx} emits {} values but layer {} expects {}",
                    pair[0].outputs,
                    idx + 1,
                    pair[1].inputs
                )));
            }
        }
        if dense.last().unwrap().outputs != 1 {
            return Err(Error::invalid("mlp output width must be exactly 1"));
        }
        let net = Self {
            layers: dense,
            activation,
        };
        if let Some(i) = net.params().iter().position(|p| !p.is_finite()) {
            return Err(Error::Numeric {
                index: i,
                message: "non-finite mlp parameter".into(),
            });
        }
        Ok(net)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.param_count()];
        self.write_params(&mut out);
        out
    }

    /// Copy parameters into `out`, which must hold exactly `param_count()` values.
    pub fn write_params(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.param_count());
        let mut off = 0;
        for layer in &self.layers {
            out[off..off + layer.weights.len()].copy_from_slice(&layer.weights);
            off += layer.weights.len();
            out[off..off + layer.bias.len()].copy_from_slice(&layer.bias);
            off += layer.bias.len();
        }
    }

    pub fn read_params(&mut self, src: &[f64]) {
        assert_eq!(src.len(), self.param_count());
        let mut off = 0;
        for layer in &mut self.layers {
            let n = layer.weights.len();
            layer.weights.copy_from_slice(&src[off..off + n]);
            off += n;
            let n = layer.bias.len();
            layer.bias.copy_from_slice(&src[off..off + n]);
            off += n;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::invalid(format!(
                "mlp expects {} inputs, got {}",
                self.input_width(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_ws(x, &mut Workspace::new(self)))
    }

    pub fn backward(&self, x: &[f64], upstream: f64) -> Result<MlpGradients> {
        self.check_input(x)?;
        let mut ws = Workspace::new(self);
        self.forward_ws(x, &mut ws);
        let mut flat = vec![0.0; self.param_count()];
        let mut input = vec![0.0; self.input_width()];
        self.backward_ws(&mut ws, upstream, &mut flat, Some(&mut input));

        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            weights.push(flat[off..off + layer.weights.len()].to_vec());
            off += layer.weights.len();
            biases.push(flat[off..off + layer.bias.len()].to_vec());
            off += layer.bias.len();
        }
        Ok(MlpGradients {
            weights,
            biases,
            input,
        })
    }

    /// Forward pass recording intermediate values in `ws`. The input length is
    /// only checked in debug builds.
    #[inline]
    pub fn forward_ws(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        debug_assert_eq!(x.len(), self.input_width());
        ws.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            let pre = &mut ws.pre[l];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let mut z = layer.bias[o];
                for (w, h) in row.iter().zip(input.iter()) {
                    z += w * h;
                }
                pre[o] = z;
                out[o] = if l == last { z } else { self.activation.apply(z) };
            }
        }
        ws.acts[self.layers.len()][0]
    }

    /// Backward pass for the most recent `forward_ws` on `ws`. Adds
    /// `upstream * d(output)/d(param)` into `grad` (length `param_count()`) and,
    /// when given, `upstream * d(output)/d(x)` into `input_grad`.
    pub fn backward_ws(
        &self,
        ws: &mut Workspace,
        upstream: f64,
        grad: &mut [f64],
        input_grad: Option<&mut [f64]>,
    ) {
        debug_assert_eq!(grad.len(), self.param_count());
        let n = self.layers.len();
        ws.delta[n - 1][0] = upstream;
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let base = ws.offsets[l];
            let (lower, upper) = ws.delta.split_at_mut(l);
            let delta = &upper[0];
            let input = &ws.acts[l];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                for (g, h) in row.iter_mut().zip(input.iter()) {
                    *g += d * h;
                }
                grad[base + layer.weights.len() + o] += d;
            }
            if l > 0 {
                let below = &mut lower[l - 1];
                let pre = &ws.pre[l - 1];
                let act = &ws.acts[l];
                for i in 0..layer.inputs {
                    let s: f64 = (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + i] * delta[o]).sum();
                    below[i] = s * self.activation.derivative(pre[i], act[i]);
                }
            }
        }

        if let Some(ig) = input_grad {
            let layer = &self.layers[0];
            let delta = &ws.delta[0];
            for (i, g) in ig.iter_mut().enumerate() {
                *g += (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + i] * delta[o]).sum::<f64>();
            }
        }
    }

    /// Smallest absolute hidden pre-activation seen at `x`. Used to keep
    /// finite-difference checks away from the leaky ReLU kink.
    pub fn min_abs_preactivation(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut ws = Workspace::new(self);
        self.forward_ws(x, &mut ws);
        Ok(ws.pre[..self.layers.len() - 1]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, z| m.min(z.abs())))
    }
}

/// Serialized form: explicit layer sizes plus per-layer weight rows and bias.
#[derive(Serialize, Deserialize)]
struct MlpRepr {
    layer_sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<LayerRepr>,
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl From<Mlp> for MlpRepr {
    fn from(net: Mlp) -> Self {
        MlpRepr {
            layer_sizes: net.layer_sizes(),
            activation: net.activation,
            layers: net
                .layers
                .iter()
                .map(|l| LayerRepr {
                    weights: l.weight_rows(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = Error;

    fn try_from(repr: MlpRepr) -> Result<Self> {
        let net = Mlp::from_layers(
            repr.layers.into_iter().map(|l| (l.weights, l.bias)).collect(),
            repr.activation,
        )?;
        if net.layer_sizes() != repr.layer_sizes {
            return Err(Error::invalid(format!(
                "declared layer sizes {:?} do not match weights {:?}",
                repr.layer_sizes,
                net.layer_sizes()
            )));
        }
        Ok(net)
    }
}

/// Scratch buffers for allocation-free forward and backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    /// Start of each layer's block in the flat parameter layout.
    offsets: Vec<usize>,
}

impl Workspace {
    pub fn new(net: &Mlp) -> Self {
        let sizes = net.layer_sizes();
        Self {
            acts: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            pre: sizes[1..].iter().map(|&s| vec![0.0; s]).collect(),
            delta: sizes[1..].iter().map(|&s| vec![0.0; s]).collect(),
            offsets: net
                .layers
                .iter()
                .scan(0, |off, l| {
                    let start = *off;
                    *off += l.param_count();
                    Some(start)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    /// Per layer, row-major like the weights.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl MlpGradients {
    /// Parameter gradients in the flat layout of [`Mlp::write_params`].
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Relative error with an absolute floor on the denominator so that
/// gradients near zero are compared on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-3;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Worst relative error between `backward` and central differences of
/// `forward`, over every parameter and input coordinate.
pub fn grad_check(net: &Mlp, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let analytic = net.backward(x, 1.0)?;
    let flat = analytic.flat();
    let base = net.params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.read_params(&p);
        let up = probe.forward(x)?;
        p[i] = base[i] - h;
        probe.read_params(&p);
        let down = probe.forward(x)?;
        worst = worst.max(relative_error(flat[i], (up - down) / (2.0 * h)));
    }
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        xp[i] = x[i] + h;
        let up = net.forward(&xp)?;
        xp[i] = x[i] - h;
        let down = net.forward(&xp)?;
        worst = worst.max(relative_error(analytic.input[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine() -> Mlp {
        Mlp::from_layers(vec![(vec![vec![0.5, -0.2]], vec![0.0])], Activation::Identity).unwrap()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 5, 1], Activation::Tanh).unwrap();
        assert_eq!(net.forward(&[1.0, -4.0, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn affine_forward_and_backward() {
        let net = affine();
        assert_eq!(net.forward(&[2.0, 5.0]).unwrap(), 0.0);
        let g = net.backward(&[2.0, 5.0], 1.0).unwrap();
        assert_eq!(g.weights[0], vec![2.0, 5.0]);
        assert_eq!(g.biases[0], vec![1.0]);
        assert_eq!(g.input, vec![0.5, -0.2]);
    }

    #[test]
    fn single_tanh_unit_at_origin() {
        let net = Mlp::from_layers(
            vec![(vec![vec![1.0]], vec![0.0]), (vec![vec![1.0]], vec![0.0])],
            Activation::Tanh,
        )
        .unwrap();
        assert_eq!(net.forward(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(3);
        let net = Mlp::glorot(&[2, 5, 5, 1], Activation::Tanh, &mut rng).unwrap();
        let g = net.backward(&[0.3, -1.2], 0.0).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = affine();
        assert!(matches!(net.forward(&[1.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(net.backward(&[1.0, 2.0, 3.0], 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(Mlp::zeros(&[2, 3], Activation::Tanh).is_err());
        assert!(Mlp::zeros(&[2], Activation::Tanh).is_err());
        assert!(Mlp::zeros(&[2, 0, 1], Activation::Tanh).is_err());
        let bad = Mlp::from_layers(
            vec![(vec![vec![1.0, 2.0]], vec![0.0]), (vec![vec![1.0, 1.0]], vec![0.0])],
            Activation::Tanh,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn zero_hidden_layers_is_affine() {
        let mut rng = Rng::new(11);
        let net = Mlp::glorot(&[3, 1], Activation::Tanh, &mut rng).unwrap();
        let f = |x: &[f64]| net.forward(x).unwrap();
        let a = [0.2, -1.0, 3.0];
        let b = [1.5, 0.5, -2.0];
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.3 * x + 0.7 * y).collect();
        assert!((f(&mid) - (0.3 * f(&a) + 0.7 * f(&b))).abs() < 1e-12);
    }

    #[test]
    fn grad_check_affine_is_exact() {
        assert!(grad_check(&affine(), &[2.0, 5.0], 1e-5).unwrap() < 1e-10);
    }

    #[test]
    fn grad_check_tanh() {
        let mut rng = Rng::new(42);
        for trial in 0..20 {
            let net = Mlp::glorot(&[3, 5, 5, 1], Activation::Tanh, &mut rng).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let err = grad_check(&net, &x, 1e-5).unwrap();
            assert!(err < 1e-4, "trial {trial}: {err}");
        }
    }

    #[test]
    fn grad_check_leaky_relu_away_from_kink() {
        let mut rng = Rng::new(7);
        let mut checked = 0;
        while checked < 20 {
            let net = Mlp::glorot(&[2, 5, 5, 1], Activation::leaky_relu(), &mut rng).unwrap();
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if net.min_abs_preactivation(&x).unwrap() <= 1e-2 {
                continue;
            }
            assert!(grad_check(&net, &x, 1e-5).unwrap() < 1e-4);
            checked += 1;
        }
    }

    #[test]
    fn leaky_relu_uses_negative_slope_at_zero() {
        let act = Activation::leaky_relu();
        assert_eq!(act.derivative(0.0, 0.0), DEFAULT_NEGATIVE_SLOPE);
        assert_eq!(act.apply(-2.0), -0.02);
    }

    #[test]
    fn params_round_trip() {
        let mut rng = Rng::new(5);
        let net = Mlp::glorot(&[2, 4, 1], Activation::Tanh, &mut rng).unwrap();
        let mut copy = Mlp::zeros(&[2, 4, 1], Activation::Tanh).unwrap();
        copy.read_params(&net.params());
        assert_eq!(copy, net);
    }
}
