//! Dense feed-forward networks with hand-written reverse-mode gradients and
//! Adam.
//!
//! All parameters of a network live in one flat `Vec<f64>`. Layer `l`
//! contributes its `out x in` weight matrix (row-major) followed by its `out`
//! biases. Gradients, optimizer moments and soft updates all work on that
//! flat layout.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, NetworkEntry};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        Self {
            input_width,
            output_width,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.output_width * (self.input_width + 1)
    }
}

/// Builds `widths.len() - 1` layers with `hidden` activation everywhere
/// except the last, which uses `output`.
pub fn layer_stack(widths: &[usize], hidden: Activation, output: Activation) -> Vec<LayerSpec> {
    let last = widths.len().saturating_sub(2);
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::new(w[0], w[1], if i == last { output } else { hidden }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

/// Per-layer activations from a forward pass: `activations[0]` is the input
/// and `activations[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input")
    }
}

impl Mlp {
    fn check_layers(layers: &[LayerSpec]) -> Result<()> {
        if layers.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.input_width == 0 || l.output_width == 0 {
                return Err(Error::config(format!("layer {i} has a zero width")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width != pair[1].input_width {
                return Err(Error::config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output_width,
                    i + 1,
                    pair[1].input_width
                )));
            }
        }
        Ok(())
    }

    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        Self::check_layers(&layers)?;
        let n = layers.iter().map(LayerSpec::param_count).sum();
        Ok(Self {
            layers,
            params: vec![0.0; n],
        })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new(layers: Vec<LayerSpec>, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        let mut offset = 0;
        for layer in &net.layers {
            let bound = 1.0 / (layer.input_width as f64).sqrt();
            for p in &mut net.params[offset..offset + layer.param_count()] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += layer.param_count();
        }
        Ok(net)
    }

    pub fn from_params(layers: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        if params.len() != net.params.len() {
            return Err(Error::WidthMismatch {
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.layers[..layer].iter().map(LayerSpec::param_count).sum()
    }

    /// Multiplies every parameter of `layer` by `factor`.
    pub fn scale_layer(&mut self, layer: usize, factor: f64) {
        let start = self.layer_offset(layer);
        let end = start + self.layers[layer].param_count();
        for p in &mut self.params[start..end] {
            *p *= factor;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.forward_cached(x)?;
        Ok(cache.activations.pop().expect("cache holds the input"))
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                actual: x.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let mut offset = 0;
        for layer in &self.layers {
            let (n_in, n_out) = (layer.input_width, layer.output_width);
            let weights = &self.params[offset..offset + n_out * n_in];
            let biases = &self.params[offset + n_out * n_in..offset + layer.param_count()];
            let input = activations.last().expect("non-empty");
            let out: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(biases)
                .map(|(row, b)| {
                    let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
                    layer.activation.apply(z)
                })
                .collect();
            activations.push(out);
            offset += layer.param_count();
        }
        Ok(ForwardCache { activations })
    }

    /// Accumulates `d(upstream . output)/d(params)` into `grads` and returns
    /// the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(upstream.len(), self.output_width(), "upstream width");
        assert_eq!(grads.len(), self.params.len(), "gradient buffer width");
        let mut offset = self.params.len();
        let mut delta: Vec<f64> = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (n_in, n_out) = (layer.input_width, layer.output_width);
            offset -= layer.param_count();
            let output = &cache.activations[l + 1];
            let input = &cache.activations[l];
            for (d, &y) in delta.iter_mut().zip(output) {
                *d *= layer.activation.derivative_at_output(y);
            }
            let (w_grad, b_grad) = grads[offset..offset + layer.param_count()].split_at_mut(n_out * n_in);
            for ((row, bg), &d) in w_grad.chunks_exact_mut(n_in).zip(b_grad).zip(&delta) {
                *bg += d;
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            let weights = &self.params[offset..offset + n_out * n_in];
            let mut input_grad = vec![0.0; n_in];
            for (row, &d) in weights.chunks_exact(n_in).zip(&delta) {
                for (g, &w) in input_grad.iter_mut().zip(row) {
                    *g += d * w;
                }
            }
            delta = input_grad;
        }
        delta
    }

    /// `theta_self <- tau * theta_online + (1 - tau) * theta_self`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) {
        assert_eq!(self.layers, online.layers, "soft update between different shapes");
        for (t, &o) in self.params.iter_mut().zip(&online.params) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
}

/// Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(param_count: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam step descending `grads`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.first_moment.len(), "parameter count");
        assert_eq!(grads.len(), self.first_moment.len(), "gradient count");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut Adam, lr: f64) {
    state.update(params, grads, lr);
}

fn probe_weights(width: usize) -> Vec<f64> {
    (0..width).map(|k| 1.0 + 0.37 * k as f64).collect()
}

/// Largest relative disagreement between `backward` and central differences
/// of the scalar `c . net(x)` for a fixed probe vector `c`, over all
/// parameters. The denominator is floored at 1e-6 so vanishing gradients
/// compare absolutely.
pub fn finite_diff_check(net: &Mlp, x: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let c = probe_weights(net.output_width());
    let objective = |n: &Mlp| -> Result<f64> {
        Ok(n.forward(x)?.iter().zip(&c).map(|(y, w)| y * w).sum())
    };
    let cache = net.forward_cached(x)?;
    let mut analytic = vec![0.0; net.param_count()];
    net.backward(&cache, &c, &mut analytic);

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + eps;
        let up = objective(&probe)?;
        probe.params[i] = orig - eps;
        let down = objective(&probe)?;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(layer_stack(&[3, 4, 2], Activation::Identity, Activation::Identity)).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_affine() {
        let net = Mlp::from_params(vec![LayerSpec::new(1, 1, Activation::Identity)], vec![2.0, 1.0]).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
        let cache = net.forward_cached(&[3.0]).unwrap();
        let mut g = vec![0.0; 2];
        let dx = net.backward(&cache, &[1.0], &mut g);
        assert_eq!(g, vec![3.0, 1.0]);
        assert_eq!(dx, vec![2.0]);
    }

    #[test]
    fn width_mismatch() {
        let net = Mlp::zeros(vec![LayerSpec::new(2, 1, Activation::Identity)]).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::WidthMismatch { expected: 2, actual: 1 })
        ));
        assert!(Mlp::zeros(vec![
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(4, 1, Activation::Identity)
        ])
        .is_err());
    }

    #[test]
    fn tanh_output_range() {
        let mut rng = stream_rng(0, Stream::Policy);
        let mut net = Mlp::new(layer_stack(&[6, 64, 64, 8], Activation::Relu, Activation::Tanh), &mut rng).unwrap();
        for p in net.params_mut() {
            *p *= 50.0;
        }
        let y = net.forward(&[1.0, -1.0, 0.5, 0.3, 0.2, 0.9]).unwrap();
        assert!(y.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = stream_rng(1, Stream::Policy);
        let net = Mlp::new(layer_stack(&[4, 8, 3], Activation::Tanh, Activation::Identity), &mut rng).unwrap();
        let cache = net.forward_cached(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut g = vec![0.0; net.param_count()];
        let dx = net.backward(&cache, &[0.0; 3], &mut g);
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream_rng(2, Stream::Policy);
        let linear = Mlp::new(layer_stack(&[3, 5, 2], Activation::Identity, Activation::Identity), &mut rng).unwrap();
        let x = [0.3, -0.7, 1.1];
        assert!(finite_diff_check(&linear, &x, 1e-5).unwrap() < 1e-9);

        let tanh = Mlp::new(layer_stack(&[3, 16, 4], Activation::Tanh, Activation::Tanh), &mut rng).unwrap();
        let small = finite_diff_check(&tanh, &x, 1e-5).unwrap();
        assert!(small < 1e-4, "{small}");
        let large = finite_diff_check(&tanh, &x, 1.0).unwrap();
        assert!(large > small);

        let actor = Mlp::new(layer_stack(&[6, 64, 64, 8], Activation::Relu, Activation::Tanh), &mut rng).unwrap();
        let err = finite_diff_check(&actor, &[0.15, 0.8, 0.0045, 0.6, 0.0045, 0.2], 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
        assert!(finite_diff_check(&actor, &[0.0; 6], 0.0).is_err());
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut params = vec![1.0, -2.0];
        let mut adam = Adam::new(2);
        adam_update(&mut params, &[0.0, 0.0], &mut adam, 1e-3);
        assert_eq!(params, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut params = vec![0.0, 0.0, 0.0];
        let mut adam = Adam::new(3);
        adam_update(&mut params, &[5.0, -0.01, 300.0], &mut adam, 1e-3);
        for (p, s) in params.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((p - s * 1e-3).abs() < 1e-8, "{p}");
        }
    }

    /// f(x, y) = (x - 1)^2 + 2 (y + 0.5)^2.
    #[test]
    fn adam_minimizes_quadratic() {
        let grad = |p: &[f64]| vec![2.0 * (p[0] - 1.0), 4.0 * (p[1] + 0.5)];
        let mut p = vec![0.0, 0.0];
        let mut adam = Adam::new(2);
        let mut converged_at = None;
        for step in 1..=5_000 {
            let g = grad(&p);
            if g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6 {
                converged_at = Some(step);
                break;
            }
            adam_update(&mut p, &g, &mut adam, 1e-3);
        }
        assert!(converged_at.is_some(), "stalled at {p:?}, grad {:?}", grad(&p));
    }

    #[test]
    fn soft_update_arithmetic() {
        let layers = vec![LayerSpec::new(1, 1, Activation::Identity)];
        let online = Mlp::from_params(layers.clone(), vec![1.0, 1.0]).unwrap();
        let mut target = Mlp::zeros(layers).unwrap();
        target.soft_update_from(&online, 5e-3);
        assert!((target.params()[0] - 0.005).abs() < 1e-15);
        let mut gap = 1.0 - target.params()[0];
        for _ in 0..100 {
            target.soft_update_from(&online, 5e-3);
            let next = 1.0 - target.params()[0];
            assert!((next - gap * (1.0 - 5e-3)).abs() < 1e-12);
            gap = next;
        }
        target.soft_update_from(&online, 1.0);
        assert_eq!(target.params(), online.params());
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let layers = layer_stack(&[6, 64, 64, 8], Activation::Relu, Activation::Tanh);
        let a = Mlp::new(layers.clone(), &mut stream_rng(9, Stream::Policy)).unwrap();
        let b = Mlp::new(layers.clone(), &mut stream_rng(9, Stream::Policy)).unwrap();
        assert_eq!(a, b);
        let bound = 1.0 / 6f64.sqrt();
        assert!(a.params()[..64 * 6].iter().all(|p| p.abs() <= bound));
    }
}
