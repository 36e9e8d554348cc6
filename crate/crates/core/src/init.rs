use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;

/// Normal(0, std) samples, redrawn when they fall outside two standard deviations.
pub fn trunc_normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    if std == 0.0 {
        return Tensor::zeros(shape.to_vec());
    }
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let v: f64 = normal.sample(rng);
        if libm::fabs(v) <= 2.0 * std {
            data.push(v);
        }
    }
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Uniform samples in `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}
