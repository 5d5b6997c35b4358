//! Dense row-major tensor of `f64` values.
//!
//! This is the universal numeric carrier of the crate: images, feature maps,
//! weights, and gradients are all `Tensor`s. Values are 64-bit so gradient
//! checks and bit-exact determinism contracts are meaningful.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and row-major data. Panics if the shape
    /// product does not match the data length; use [`Tensor::try_new`] for a
    /// fallible variant.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Self {
        Self::try_new(shape, data).expect("shape/data length mismatch")
    }

    pub fn try_new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Single element of a `[1]` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        assert_eq!(n, self.data.len(), "reshape changes element count");
        self.shape = shape;
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }
}

/// `out = a(m×k) · b(k×n)`, accumulating when `beta` is 1. Thin wrapper over
/// ndarray's gemm so the hot paths share one well-optimized kernel. The
/// underlying kernel is sequential and uses a fixed blocking scheme, so
/// results are bit-identical across runs and thread counts.
pub fn matmul_into(
    out: &mut [f64],
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let a = ArrayView2::from_shape((m, k), a).unwrap();
    let b = ArrayView2::from_shape((k, n), b).unwrap();
    let mut c = ArrayViewMut2::from_shape((m, n), out).unwrap();
    general_mat_mul(1.0, &a, &b, beta, &mut c);
}

/// `out = a(m×k) · b(n×k)ᵀ`.
pub fn matmul_bt_into(
    out: &mut [f64],
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let a = ArrayView2::from_shape((m, k), a).unwrap();
    let b = ArrayView2::from_shape((n, k), b).unwrap();
    let mut c = ArrayViewMut2::from_shape((m, n), out).unwrap();
    general_mat_mul(1.0, &a, &b.t(), beta, &mut c);
}

/// `out = a(k×m)ᵀ · b(k×n)`.
pub fn matmul_at_into(
    out: &mut [f64],
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    beta: f64,
) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let a = ArrayView2::from_shape((k, m), a).unwrap();
    let b = ArrayView2::from_shape((k, n), b).unwrap();
    let mut c = ArrayViewMut2::from_shape((m, n), out).unwrap();
    general_mat_mul(1.0, &a.t(), &b, beta, &mut c);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_shape_product() {
        assert!(Tensor::try_new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::try_new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        matmul_into(&mut c, &a, &b, 2, 2, 2, 0.0);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_transposed_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut c = [0.0; 4];
        matmul_into(&mut c, &a, &b, 2, 3, 2, 0.0);

        // a · b == a · (bᵀ)ᵀ
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0]; // 2x3 = bᵀ
        let mut c2 = [0.0; 4];
        matmul_bt_into(&mut c2, &a, &bt, 2, 3, 2, 0.0);
        assert_eq!(c, c2);

        // a · b == (aᵀ)ᵀ · b
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]; // 3x2 = aᵀ
        let mut c3 = [0.0; 4];
        matmul_at_into(&mut c3, &at, &b, 2, 3, 2, 0.0);
        assert_eq!(c, c3);
    }

    #[test]
    fn matmul_accumulates_with_beta_one() {
        let a = [1.0, 0.0, 0.0, 1.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let mut c = [10.0, 10.0, 10.0, 10.0];
        matmul_into(&mut c, &a, &b, 2, 2, 2, 1.0);
        assert_eq!(c, [11.0, 12.0, 13.0, 14.0]);
    }
}
