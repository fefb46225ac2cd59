//! Minimal fixed-topology MLP with exact reverse-mode gradients and Adam.
//!
//! Parameters live in one flat vector plus a shape manifest, so checkpoints
//! are a single vector with metadata and finite-difference probes can index
//! any coordinate directly. The hidden activation applies to every layer
//! except the last, which is always linear.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
    /// Linear everywhere, including hidden layers.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the post-activation value.
    fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Shape of one dense layer: `output = W (out x in) * input + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub input: usize,
    pub output: usize,
    pub bias: bool,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        self.input * self.output + if self.bias { self.output } else { 0 }
    }
}

/// Flat parameter vector plus its layer manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    values: Vec<f64>,
    shapes: Vec<LayerShape>,
    activation: Activation,
}

/// Gradient with the same flat layout as its `ParamSet`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Gradient {
            values: vec![0.0; len],
        }
    }

    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }
}

/// Uniform init bound per layer, Xavier-style: `gain * sqrt(6 / (fan_in + fan_out))`.
fn init_bound(shape: &LayerShape, gain: f64) -> f64 {
    gain * (6.0 / (shape.input + shape.output) as f64).sqrt()
}

impl ParamSet {
    pub fn zeros(shapes: Vec<LayerShape>, activation: Activation) -> Self {
        let total = shapes.iter().map(LayerShape::param_count).sum();
        ParamSet {
            values: vec![0.0; total],
            shapes,
            activation,
        }
    }

    /// Scaled uniform init; biases start at zero. `last_gain` applies to the
    /// final layer only (small values keep an initial policy near-uniform).
    pub fn init<R: Rng>(
        shapes: Vec<LayerShape>,
        activation: Activation,
        last_gain: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = ParamSet::zeros(shapes, activation);
        let n_layers = p.shapes.len();
        let mut offset = 0;
        for (l, shape) in p.shapes.clone().iter().enumerate() {
            let gain = if l + 1 == n_layers { last_gain } else { 1.0 };
            let bound = init_bound(shape, gain);
            for i in 0..shape.input * shape.output {
                p.values[offset + i] = rng.gen_range(-bound..bound);
            }
            offset += shape.param_count();
        }
        p
    }

    /// Convenience constructor for an MLP `in -> hidden... -> out`.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, activation: Activation) -> Self {
        let mut shapes = Vec::new();
        let mut prev = input;
        for &h in hidden {
            shapes.push(LayerShape {
                input: prev,
                output: h,
                bias: true,
            });
            prev = h;
        }
        shapes.push(LayerShape {
            input: prev,
            output,
            bias: true,
        });
        ParamSet::zeros(shapes, activation)
    }

    pub fn from_values(
        values: Vec<f64>,
        shapes: Vec<LayerShape>,
        activation: Activation,
    ) -> Result<Self> {
        let total: usize = shapes.iter().map(LayerShape::param_count).sum();
        if values.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                actual: values.len(),
            });
        }
        Ok(ParamSet {
            values,
            shapes,
            activation,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.shapes.first().map_or(0, |s| s.input)
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().map_or(0, |s| s.output)
    }

    /// Evaluates the network. Pure: equal arguments give bitwise-equal output.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let n_layers = self.shapes.len();
        let mut current = input.to_vec();
        let mut offset = 0;
        for (l, shape) in self.shapes.iter().enumerate() {
            let mut next = vec![0.0; shape.output];
            for o in 0..shape.output {
                let row = offset + o * shape.input;
                let mut z = 0.0;
                for i in 0..shape.input {
                    z += self.values[row + i] * current[i];
                }
                if shape.bias {
                    z += self.values[offset + shape.input * shape.output + o];
                }
                next[o] = if l + 1 == n_layers {
                    z
                } else {
                    self.activation.apply(z)
                };
            }
            offset += shape.param_count();
            current = next;
        }
        Ok(current)
    }

    /// Exact reverse-mode gradient of `<output, output_grad>` with respect to
    /// every parameter.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradient> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: output_grad.len(),
            });
        }
        let n_layers = self.shapes.len();

        // Forward pass caching post-activation values per layer.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        let mut offset = 0;
        for (l, shape) in self.shapes.iter().enumerate() {
            let prev = &acts[l];
            let mut next = vec![0.0; shape.output];
            for o in 0..shape.output {
                let row = offset + o * shape.input;
                let mut z = 0.0;
                for i in 0..shape.input {
                    z += self.values[row + i] * prev[i];
                }
                if shape.bias {
                    z += self.values[offset + shape.input * shape.output + o];
                }
                next[o] = if l + 1 == n_layers {
                    z
                } else {
                    self.activation.apply(z)
                };
            }
            offset += shape.param_count();
            acts.push(next);
        }

        let mut grad = Gradient::zeros(self.len());
        let mut delta = output_grad.to_vec();
        let mut offsets: Vec<usize> = Vec::with_capacity(n_layers);
        let mut acc = 0;
        for shape in &self.shapes {
            offsets.push(acc);
            acc += shape.param_count();
        }

        for l in (0..n_layers).rev() {
            let shape = &self.shapes[l];
            let off = offsets[l];
            // Last layer is linear; hidden layers need the activation derivative.
            if l + 1 != n_layers {
                for (o, d) in delta.iter_mut().enumerate() {
                    *d *= self.activation.deriv_from_output(acts[l + 1][o]);
                }
            }
            let prev = &acts[l];
            for o in 0..shape.output {
                let row = off + o * shape.input;
                for i in 0..shape.input {
                    grad.values[row + i] += delta[o] * prev[i];
                }
                if shape.bias {
                    grad.values[off + shape.input * shape.output + o] += delta[o];
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; shape.input];
                for o in 0..shape.output {
                    let row = off + o * shape.input;
                    for (i, pd) in prev_delta.iter_mut().enumerate() {
                        *pd += self.values[row + i] * delta[o];
                    }
                }
                delta = prev_delta;
            }
        }
        Ok(grad)
    }
}

/// Adam state for one `ParamSet`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_len: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step. Refuses non-finite gradients and guarantees
/// finite parameters afterwards.
pub fn optimizer_step(params: &mut ParamSet, grad: &Gradient, state: &mut AdamState) -> Result<()> {
    if grad.values.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: grad.values.len(),
        });
    }
    if grad.values.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "gradient",
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad.values[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params.values[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    if params.values.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite {
            context: "parameters after optimizer step",
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_1layer(n: usize) -> ParamSet {
        let shape = LayerShape {
            input: n,
            output: n,
            bias: true,
        };
        let mut values = vec![0.0; shape.param_count()];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        ParamSet::from_values(values, vec![shape], Activation::Identity).unwrap()
    }

    #[test]
    fn forward_identity() {
        let net = identity_1layer(2);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_zero_net() {
        let net = ParamSet::mlp(3, &[], 2, Activation::Tanh);
        assert_eq!(net.forward(&[0.3, -1.0, 7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let net = ParamSet::mlp(3, &[], 2, Activation::Tanh);
        match net.forward(&[1.0, 2.0]) {
            Err(Error::DimensionMismatch { expected, actual }) => {
                assert_eq!(expected, 3);
                assert_eq!(actual, 2);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        // 2 -> 2 -> 1 tanh net with hand-set weights, evaluated by an
        // independent straight-line computation.
        let shapes = vec![
            LayerShape {
                input: 2,
                output: 2,
                bias: true,
            },
            LayerShape {
                input: 2,
                output: 1,
                bias: true,
            },
        ];
        let values = vec![
            0.5, -0.25, // W1 row 0
            0.1, 0.8, // W1 row 1
            0.05, -0.1, // b1
            1.5, -2.0, // W2 row 0
            0.3, // b2
        ];
        let net = ParamSet::from_values(values, shapes, Activation::Tanh).unwrap();
        let x = [0.7, -0.4];
        let h0 = (0.5 * 0.7 + (-0.25) * (-0.4) + 0.05f64).tanh();
        let h1 = (0.1 * 0.7 + 0.8 * (-0.4) + (-0.1f64)).tanh();
        let expected = 1.5 * h0 + (-2.0) * h1 + 0.3;
        let out = net.forward(&x).unwrap();
        assert!((out[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ParamSet::init(
            vec![
                LayerShape {
                    input: 3,
                    output: 4,
                    bias: true,
                },
                LayerShape {
                    input: 4,
                    output: 2,
                    bias: true,
                },
            ],
            Activation::Tanh,
            1.0,
            &mut rng,
        );
        let x = [0.1, -0.2, 0.3];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn backward_zero_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ParamSet::init(
            vec![LayerShape {
                input: 3,
                output: 2,
                bias: true,
            }],
            Activation::Tanh,
            1.0,
            &mut rng,
        );
        let g = net.backward(&[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_linear_row() {
        // 1-layer identity net, upstream e_1: gradient of weight row 1 is the input.
        let net = identity_1layer(3);
        let input = [0.5, -2.0, 3.0];
        let g = net.backward(&input, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(&g.values[3..6], &input[..]);
        // Other rows and biases untouched except bias of row 1.
        assert!(g.values[0..3].iter().all(|&v| v == 0.0));
        assert!(g.values[6..9].iter().all(|&v| v == 0.0));
        assert_eq!(g.values[9 + 1], 1.0);
    }

    fn finite_diff_check(net: &ParamSet, input: &[f64], upstream: &[f64], tol: f64) {
        let analytic = net.backward(input, upstream).unwrap();
        let h = 1e-5;
        for i in 0..net.len() {
            let mut plus = net.clone();
            plus.values_mut()[i] += h;
            let mut minus = net.clone();
            minus.values_mut()[i] -= h;
            let f = |p: &ParamSet| -> f64 {
                p.forward(input)
                    .unwrap()
                    .iter()
                    .zip(upstream)
                    .map(|(o, g)| o * g)
                    .sum()
            };
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            let denom = numeric.abs().max(analytic.values[i].abs()).max(1.0);
            assert!(
                (numeric - analytic.values[i]).abs() / denom < tol,
                "param {i}: analytic {} vs numeric {}",
                analytic.values[i],
                numeric
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for probe in 0..5 {
            let net = ParamSet::init(
                vec![
                    LayerShape {
                        input: 2,
                        output: 3,
                        bias: true,
                    },
                    LayerShape {
                        input: 3,
                        output: 2,
                        bias: true,
                    },
                ],
                Activation::Tanh,
                1.0,
                &mut rng,
            );
            let input = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let upstream = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            finite_diff_check(&net, &input, &upstream, 1e-4);
            let _ = probe;
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut net = ParamSet::mlp(2, &[3], 1, Activation::Tanh);
        let before = net.clone();
        let mut state = AdamState::new(net.len(), 0.1);
        let zero = Gradient::zeros(net.len());
        optimizer_step(&mut net, &zero, &mut state).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // Scalar parameter, grad 1.0: bias-corrected first step is
        // -lr * m_hat / (sqrt(v_hat) + eps) = -lr * 1 / (1 + eps) ~ -lr.
        let shape = LayerShape {
            input: 1,
            output: 1,
            bias: false,
        };
        let mut net = ParamSet::from_values(vec![0.0], vec![shape], Activation::Identity).unwrap();
        let mut state = AdamState::new(1, 0.1);
        optimizer_step(
            &mut net,
            &Gradient {
                values: vec![1.0],
            },
            &mut state,
        )
        .unwrap();
        assert!((net.values()[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn adam_two_steps_match_closed_form() {
        let shape = LayerShape {
            input: 1,
            output: 1,
            bias: false,
        };
        let mut net = ParamSet::from_values(vec![0.0], vec![shape], Activation::Identity).unwrap();
        let mut state = AdamState::new(1, 0.1);
        let g = Gradient {
            values: vec![0.5],
        };
        optimizer_step(&mut net, &g, &mut state).unwrap();
        optimizer_step(&mut net, &g, &mut state).unwrap();
        assert_eq!(state.step, 2);
        // m_t = (1 - b1^t) * g for constant gradients; same for v with g^2.
        let expect_m = (1.0 - 0.9f64.powi(2)) * 0.5;
        let expect_v = (1.0 - 0.999f64.powi(2)) * 0.25;
        assert!((state.m[0] - expect_m).abs() < 1e-12);
        assert!((state.v[0] - expect_v).abs() < 1e-12);
    }

    #[test]
    fn adam_refuses_non_finite_gradient() {
        let mut net = ParamSet::mlp(1, &[], 1, Activation::Identity);
        let before = net.clone();
        let mut state = AdamState::new(net.len(), 0.1);
        let g = Gradient {
            values: vec![f64::NAN, 0.0],
        };
        assert!(optimizer_step(&mut net, &g, &mut state).is_err());
        assert_eq!(net, before);
    }
}
