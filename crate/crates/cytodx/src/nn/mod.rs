//! Minimal reverse-mode differentiation core.
//!
//! Only the layer set the backbone needs is implemented: conv2d, batch norm,
//! 2×2 max pooling, relu, linear, log-softmax, NLL loss, the stain
//! deconvolution and DCT front-end ops, and the two pooling heads. Forward
//! passes are deterministic: reductions run in a fixed order, so single- and
//! multi-threaded runs agree bit-exactly.

pub mod gradcheck;
pub mod ops;
pub mod tape;

pub use gradcheck::{grad_check, CheckReport};
pub use ops::Mode;
pub use tape::{Tape, Var};

use crate::tensor::Tensor;

/// A trainable tensor with its gradient slot.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Parameter {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn frozen(value: Tensor) -> Self {
        let mut p = Self::new(value);
        p.trainable = false;
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    /// Adds `g` into the gradient slot. Shapes must match.
    pub fn accumulate(&mut self, g: &Tensor) {
        assert_eq!(self.grad.shape(), g.shape(), "gradient shape mismatch");
        for (dst, src) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *dst += src;
        }
    }
}

/// Plain SGD: `value ← value − lr·grad` for every trainable parameter, then
/// gradients are zeroed so the next backward pass starts clean.
pub fn sgd_step(params: &mut [&mut Parameter], lr: f64) {
    for p in params.iter_mut() {
        if p.trainable {
            let grad = p.grad.data().to_vec();
            for (v, g) in p.value.data_mut().iter_mut().zip(&grad) {
                *v -= lr * g;
            }
        }
        p.zero_grad();
    }
}

/// Kaiming-uniform initialization for relu networks: U(−b, b) with
/// b = sqrt(6 / fan_in).
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl rand::Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_updates_and_zeroes_grads() {
        let mut p = Parameter::new(Tensor::scalar(1.0));
        p.grad.data_mut()[0] = 0.5;
        sgd_step(&mut [&mut p], 0.1);
        assert_eq!(p.value.item(), 0.95);
        assert_eq!(p.grad.item(), 0.0);
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut p = Parameter::new(Tensor::scalar(2.0));
        p.grad.data_mut()[0] = 3.0;
        sgd_step(&mut [&mut p], 0.0);
        assert_eq!(p.value.item(), 2.0);
    }

    #[test]
    fn sgd_two_steps_constant_grad() {
        let mut p = Parameter::new(Tensor::scalar(1.0));
        for _ in 0..2 {
            p.grad.data_mut()[0] = 2.0;
            sgd_step(&mut [&mut p], 0.1);
        }
        assert!((p.value.item() - (1.0 - 2.0 * 0.1 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn frozen_parameter_is_not_updated() {
        let mut p = Parameter::frozen(Tensor::scalar(1.0));
        p.grad.data_mut()[0] = 1.0;
        sgd_step(&mut [&mut p], 0.1);
        assert_eq!(p.value.item(), 1.0);
    }
}
