//! Dense layers, MLPs and the SGD optimizer shared by every trainable network.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        Dense {
            weight: Tensor::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit)),
            bias: Tensor::zeros(1, fan_out),
        }
    }
}

/// Stack of dense layers with ReLU between them (none after the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// An [`Mlp`] whose parameters live on a tape.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output dims");
        Mlp {
            layers: dims.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone(), trainable), tape.leaf(l.bias.clone(), trainable)))
                .collect(),
        }
    }

    /// Untaped forward pass.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = bound.forward(&mut tape, xv)?;
        Ok(tape.value(y).clone())
    }
}

impl BoundMlp {
    /// Rebinds an MLP from vars laid out as `[w0, b0, w1, b1, ..]`.
    pub fn from_vars(vars: &[Var]) -> Self {
        assert!(vars.len().is_multiple_of(2) && !vars.is_empty(), "expected weight/bias pairs");
        BoundMlp {
            layers: vars.chunks(2).map(|c| (c[0], c[1])).collect(),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = tape.matmul(h, *w)?;
            h = tape.add_row(h, *b)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }
}

/// Ordered access to trainable tensors; the order matches the bound vars.
pub trait Parameters {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// A non-positive or infinite `max_norm` leaves them untouched. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let sq: f64 = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum();
    let norm = libm::sqrt(sq);
    if max_norm > 0.0 && max_norm.is_finite() && norm > max_norm {
        let c = max_norm / norm;
        for g in grads.iter_mut() {
            *g = g.scale(c);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn plain(lr: f64) -> Self {
        SgdConfig {
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
        }
    }
}

/// Stochastic gradient descent with optional momentum and L2 weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Self {
        Sgd {
            config,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape {
                op: "sgd_step",
                lhs: (params.len(), 1),
                rhs: (grads.len(), 1),
            });
        }
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        }
        let SgdConfig {
            lr,
            momentum,
            weight_decay,
        } = self.config;
        for ((p, g), v) in params.into_iter().zip(grads).zip(self.velocity.iter_mut()) {
            p.same_shape(g, "sgd_step")?;
            for k in 0..p.len() {
                let grad = g.data()[k] + weight_decay * p.data()[k];
                let vel = momentum * v.data()[k] + grad;
                v.data_mut()[k] = vel;
                p.data_mut()[k] -= lr * vel;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_gradients_pass_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&[3, 5, 2], &mut rng);
        let x = Tensor::from_fn(4, 3, |i, j| (i as f64 - j as f64) * 0.4);
        let params: Vec<Tensor> = mlp.params().into_iter().cloned().collect();
        let err = grad_check(
            |t, p| {
                let xv = t.constant(x.clone());
                let mut h = xv;
                for (i, pair) in p.chunks(2).enumerate() {
                    h = t.matmul(h, pair[0])?;
                    h = t.add_row(h, pair[1])?;
                    if i == 0 {
                        h = t.relu(h)?;
                    }
                }
                t.cross_entropy(h, &[0, 1, 1, 0])
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut p = Tensor::row_vector(&[1.0, -1.0]);
        let g = Tensor::row_vector(&[0.5, -0.5]);
        let mut opt = Sgd::new(SgdConfig::plain(0.1));
        opt.step(vec![&mut p], &[g]).unwrap();
        assert_eq!(p.data(), &[0.95, -0.95]);
    }

    #[test]
    fn zero_gradient_without_decay_leaves_params() {
        let mut p = Tensor::row_vector(&[1.0, 2.0]);
        let mut opt = Sgd::new(SgdConfig {
            lr: 0.3,
            momentum: 0.9,
            weight_decay: 0.0,
        });
        opt.step(vec![&mut p], &[Tensor::zeros(1, 2)]).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0]);
    }

    #[test]
    fn grad_norm_clipping() {
        let mut g = vec![Tensor::row_vector(&[3.0]), Tensor::row_vector(&[0.0, 4.0])];
        assert_eq!(clip_grad_norm(&mut g, 10.0), 5.0);
        assert_eq!(g[1].data(), &[0.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0].item() - 0.6).abs() < 1e-15 && (g[1].get(0, 1) - 0.8).abs() < 1e-15);
        let mut h = vec![Tensor::row_vector(&[30.0])];
        clip_grad_norm(&mut h, 0.0);
        assert_eq!(h[0].item(), 30.0);
    }
}
