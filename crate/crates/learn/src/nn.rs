//! Dense feed-forward networks with batched forward passes and hand-written
//! reverse-mode gradients.
//!
//! Rows are samples: a batch is a `(batch, width)` matrix and each layer computes
//! `act(X·W + b)` with `W` of shape `(in, out)`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("input width {got} does not match the network input width {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("gradient shape {got:?} does not match the recorded output {expected:?}")]
    GradShape { expected: (usize, usize), got: (usize, usize) },
    #[error("backward called without a matching recorded forward pass")]
    NoTrace,
    #[error("a network needs at least an input and an output width")]
    TooFewWidths,
    #[error("flat parameter vector has {got} entries, expected {expected}")]
    FlatLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Identity => {}
        }
    }

    /// Multiply `grad` in place by the activation derivative, expressed through the output `y`.
    fn backprop(self, y: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Tanh => Zip::from(grad).and(y).for_each(|g, &y| *g *= 1.0 - y * y),
            Activation::Relu => Zip::from(grad).and(y).for_each(|g, &y| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Identity => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations recorded by [`Mlp::forward_trace`]; `values[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    values: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> Option<&Array2<f64>> {
        self.values.last()
    }
}

/// Parameter gradients laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weight: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weight: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            bias: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weight.iter().zip(&self.bias) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

impl Mlp {
    /// Uniform fan-in initialisation `U(−1/√in, 1/√in)`; the output layer is
    /// scaled by `out_scale`.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        out_scale: f64,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        if widths.len() < 2 {
            return Err(NetError::TooFewWidths);
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let scale = if i == last { out_scale } else { 1.0 };
                let mut draw = || rng.random_range(-bound..bound) * scale;
                let weight = Array2::from_shape_simple_fn((w[0], w[1]), &mut draw);
                let bias = Array1::from_shape_simple_fn(w[1], &mut draw);
                Layer { weight, bias, activation: if i == last { output } else { hidden } }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.nrows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.ncols())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NetError> {
        if x.ncols() != self.input_dim() {
            return Err(NetError::InputWidth { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(())
    }

    fn layer_forward(layer: &Layer, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&layer.weight);
        z += &layer.bias;
        layer.activation.apply(&mut z);
        z
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = Self::layer_forward(layer, &h.view());
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("a slice is contiguous");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Trace), NetError> {
        self.check_input(&x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_owned());
        for layer in &self.layers {
            let next = Self::layer_forward(layer, &values.last().expect("non-empty").view());
            values.push(next);
        }
        let out = values.last().expect("non-empty").clone();
        Ok((out, Trace { values }))
    }

    /// Gradients of `Σ grad_out ⊙ output` with respect to every parameter and to the input.
    pub fn backward(&self, trace: &Trace, grad_out: &Array2<f64>) -> Result<(Grads, Array2<f64>), NetError> {
        if trace.values.len() != self.layers.len() + 1 {
            return Err(NetError::NoTrace);
        }
        let out = trace.values.last().expect("non-empty");
        if out.dim() != grad_out.dim() {
            return Err(NetError::GradShape { expected: out.dim(), got: grad_out.dim() });
        }
        let mut grads = Grads { weight: Vec::with_capacity(self.layers.len()), bias: Vec::with_capacity(self.layers.len()) };
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if trace.values[i].ncols() != layer.weight.nrows() || trace.values[i + 1].ncols() != layer.weight.ncols() {
                return Err(NetError::NoTrace);
            }
            layer.activation.backprop(&trace.values[i + 1], &mut g);
            grads.weight.push(trace.values[i].t().dot(&g));
            grads.bias.push(g.sum_axis(Axis(0)));
            g = g.dot(&layer.weight.t());
        }
        grads.weight.reverse();
        grads.bias.reverse();
        Ok((grads, g))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NetError> {
        if flat.len() != self.num_params() {
            return Err(NetError::FlatLength { expected: self.num_params(), got: flat.len() });
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Visit every parameter together with its gradient, in flat order.
    pub fn zip_params_mut(&mut self, grads: &Grads, mut f: impl FnMut(usize, &mut f64, f64)) {
        let mut i = 0;
        for (l, (gw, gb)) in self.layers.iter_mut().zip(grads.weight.iter().zip(&grads.bias)) {
            for (p, g) in l.weight.iter_mut().zip(gw.iter()).chain(l.bias.iter_mut().zip(gb.iter())) {
                f(i, p, *g);
                i += 1;
            }
        }
    }

    /// `self ← β·online + (1−β)·self`.
    pub fn polyak_from(&mut self, online: &Mlp, beta: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.weight).and(&o.weight).for_each(|t, &o| *t = beta * o + (1.0 - beta) * *t);
            Zip::from(&mut t.bias).and(&o.bias).for_each(|t, &o| *t = beta * o + (1.0 - beta) * *t);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_network_passes_input_through() {
        let layer = Layer { weight: Array2::eye(3), bias: Array1::zeros(3), activation: Activation::Identity };
        let net = Mlp::from_layers(vec![layer.clone(), layer]);
        let x = array![[0.3, -1.2, 4.0], [1.0, 2.0, 3.0]];
        assert_eq!(net.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn dead_tanh_unit_outputs_zero() {
        let layer = Layer { weight: Array2::zeros((2, 1)), bias: Array1::zeros(1), activation: Activation::Tanh };
        let net = Mlp::from_layers(vec![layer]);
        assert_eq!(net.forward_one(&[5.0, -7.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, 1.0, &mut rng).unwrap();
        assert!(matches!(net.forward_one(&[1.0]), Err(NetError::InputWidth { expected: 3, got: 1 })));
    }

    #[test]
    fn backward_without_trace_is_invalid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, 1.0, &mut rng).unwrap();
        let g = Array2::zeros((1, 2));
        assert_eq!(net.backward(&Trace::default(), &g).unwrap_err(), NetError::NoTrace);
    }

    #[test]
    fn linear_gradient_is_an_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 2], Activation::Tanh, Activation::Identity, 1.0, &mut rng).unwrap();
        let x = array![[0.5, -1.0, 2.0]];
        let (_, trace) = net.forward_trace(x.view()).unwrap();
        let g = array![[1.5, -0.25]];
        let (grads, gin) = net.backward(&trace, &g).unwrap();
        assert_eq!(grads.weight[0], x.t().dot(&g));
        assert_eq!(grads.bias[0], array![1.5, -0.25]);
        assert_eq!(gin, g.dot(&net.layers[0].weight.t()));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[4, 8, 8, 3], Activation::Relu, Activation::Tanh, 1.0, &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let (_, trace) = net.forward_trace(x.view()).unwrap();
        let (grads, gin) = net.backward(&trace, &Array2::zeros((5, 3))).unwrap();
        assert!(grads.to_flat().iter().all(|&g| g == 0.0));
        assert!(gin.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn flat_round_trip_and_polyak() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Mlp::new(&[2, 3, 1], Activation::Tanh, Activation::Identity, 1.0, &mut rng).unwrap();
        let mut b = Mlp::new(&[2, 3, 1], Activation::Tanh, Activation::Identity, 1.0, &mut rng).unwrap();
        let old = b.to_flat();
        b.polyak_from(&a, 0.25);
        for ((t, o), n) in old.iter().zip(a.to_flat()).zip(b.to_flat()) {
            assert_eq!(n, 0.25 * o + 0.75 * t);
        }
        let mut c = b.clone();
        c.set_flat(&a.to_flat()).unwrap();
        assert_eq!(c, a);
        assert!(c.set_flat(&[0.0]).is_err());
    }
}
