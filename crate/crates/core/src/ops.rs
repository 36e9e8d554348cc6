//! Forward kernels shared by the plain API and the recording [`Tape`](crate::tape::Tape).
//!
//! Each kernel is a pure function of its operands. The tape calls exactly these
//! functions, both while recording and while replaying, so the two paths agree
//! bit-for-bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, dim_err, Result};
use crate::tensor::Tensor;

/// Default layer-norm epsilon.
pub const LN_EPS: f64 = 1e-6;

/// `out[..., j] = sum_i w[j, i] * x[..., i] + b[j]`.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if w.rank() != 2 || b.rank() != 1 || b.shape()[0] != w.shape()[0] {
        return dim_err("affine", w.shape(), b.shape());
    }
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    if x.last_dim() != in_dim {
        return dim_err("affine", x.shape(), w.shape());
    }
    let rows = x.len() / in_dim;
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let mut out = vec![0.0; rows * out_dim];
    for r in 0..rows {
        let xr = &xd[r * in_dim..(r + 1) * in_dim];
        for j in 0..out_dim {
            let wr = &wd[j * in_dim..(j + 1) * in_dim];
            let mut acc = 0.0;
            for i in 0..in_dim {
                acc += wr[i] * xr[i];
            }
            out[r * out_dim + j] = acc + bd[j];
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out_dim;
    Tensor::new(shape, out)
}

/// Extents `(batch, m, k, n)` of a batched product of `a: [B, m, k]` with
/// `b: [B, k, n]` (or `b: [B, n, k]` when `trans_b`).
pub(crate) fn matmul_dims(
    a: &Tensor,
    b: &Tensor,
    trans_b: bool,
) -> Result<(usize, usize, usize, usize)> {
    if a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] {
        return dim_err("matmul", a.shape(), b.shape());
    }
    let (batch, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let (bk, n) = if trans_b {
        (b.shape()[2], b.shape()[1])
    } else {
        (b.shape()[1], b.shape()[2])
    };
    if bk != k {
        return dim_err("matmul", a.shape(), b.shape());
    }
    Ok((batch, m, k, n))
}

/// Batched matrix product `a @ b` (or `a @ b^T` when `trans_b`).
pub fn matmul(a: &Tensor, b: &Tensor, trans_b: bool) -> Result<Tensor> {
    let (batch, m, k, n) = matmul_dims(a, b, trans_b)?;
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; batch * m * n];
    for bi in 0..batch {
        let a0 = bi * m * k;
        let b0 = bi * k * n;
        let o0 = bi * m * n;
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    let bv = if trans_b {
                        bd[b0 + j * k + p]
                    } else {
                        bd[b0 + p * n + j]
                    };
                    acc += ad[a0 + i * k + p] * bv;
                }
                out[o0 + i * n + j] = acc;
            }
        }
    }
    Tensor::new(vec![batch, m, n], out)
}

/// `(outer, len, inner)` strides for reducing along `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Numerically stable softmax along `axis` (max-subtracted).
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(contract!(
            "softmax axis {} invalid for shape {:?}",
            axis,
            x.shape()
        ));
    }
    let (outer, len, inner) = axis_split(x.shape(), axis);
    let xd = x.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let mut max = f64::NEG_INFINITY;
            for j in 0..len {
                max = max.max(xd[at(j)]);
            }
            let mut sum = 0.0;
            for j in 0..len {
                let e = libm::exp(xd[at(j)] - max);
                out[at(j)] = e;
                sum += e;
            }
            for j in 0..len {
                out[at(j)] /= sum;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Layer norm over the trailing axis. Also returns the per-row `1/sigma`.
pub(crate) fn layer_norm_with_stats(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, Vec<f64>)> {
    let d = x.last_dim();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return dim_err("layer_norm", x.shape(), gamma.shape());
    }
    if !(eps > 0.0) {
        return Err(contract!("layer_norm eps must be positive, got {}", eps));
    }
    let rows = x.len() / d;
    let (xd, g, bt) = (x.data(), gamma.data(), beta.data());
    let mut out = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &xd[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / libm::sqrt(var + eps);
        for i in 0..d {
            out[r * d + i] = (row[i] - mean) * is * g[i] + bt[i];
        }
        inv_std.push(is);
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, inv_std))
}

/// Layer norm over the trailing axis: zero mean and unit variance per
/// position, then `gamma * xhat + beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    layer_norm_with_stats(x, gamma, beta, eps).map(|(y, _)| y)
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

pub(crate) fn gelu_grad_scalar(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
        + x * FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Exact (erf-based) GELU.
pub fn gelu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| gelu_scalar(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Mean over every leading axis: `[..., D] -> [D]`.
pub fn mean_rows(x: &Tensor) -> Tensor {
    let d = x.last_dim();
    let rows = x.len() / d;
    let mut out = vec![0.0; d];
    for r in 0..rows {
        for i in 0..d {
            out[i] += x.data()[r * d + i];
        }
    }
    for v in &mut out {
        *v /= rows as f64;
    }
    Tensor::vector(out)
}

/// Mean cross-entropy of `logits: [B, C]` against class ids.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return dim_err("cross_entropy", logits.shape(), &[labels.len()]);
    }
    let c = logits.shape()[1];
    let mut total = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(contract!("label {} out of range for {} classes", label, c));
        }
        let row = &logits.data()[b * c..(b + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
        total += lse - row[label];
    }
    Ok(Tensor::scalar(total / labels.len() as f64))
}

/// `out[i] = x[index[i]]`, reshaped to `shape`.
pub fn gather(x: &Tensor, index: &[usize], shape: &[usize]) -> Result<Tensor> {
    let xd = x.data();
    let mut out = Vec::with_capacity(index.len());
    for &i in index {
        match xd.get(i) {
            Some(&v) => out.push(v),
            None => {
                return Err(contract!(
                    "gather index {} out of bounds for {} elements",
                    i,
                    xd.len()
                ))
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return dim_err("add", a.shape(), b.shape());
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn scale(x: &Tensor, factor: f64) -> Tensor {
    let data = x.data().iter().map(|v| v * factor).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_and_hand_sum() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let w = Tensor::new([2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0, 0.0]);
        assert_eq!(affine(&x, &w, &b).unwrap().data(), &[1.0, 2.0]);

        let x = Tensor::vector(vec![1.0, 1.0]);
        let w = Tensor::new([1, 2], vec![2.0, 3.0]).unwrap();
        let b = Tensor::vector(vec![1.0]);
        assert_eq!(affine(&x, &w, &b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let x = Tensor::zeros([4, 3]);
        let w = Tensor::zeros([2, 5]);
        let b = Tensor::zeros([2]);
        let err = affine(&x, &w, &b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[4, 3]") && msg.contains("[2, 5]"), "{msg}");
    }

    #[test]
    fn softmax_symmetric_and_stable() {
        let y = softmax(&Tensor::vector(vec![0.0, 0.0]), 0).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
        let y = softmax(&Tensor::vector(vec![1000.0, 0.0]), 0).unwrap();
        assert_eq!(y.data()[0], 1.0);
        assert_eq!(y.data()[1], 0.0);
        assert!(y.is_finite());
    }

    #[test]
    fn softmax_inner_axis() {
        let x = Tensor::new([2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]).unwrap();
        let y = softmax(&x, 0).unwrap();
        for c in 0..3 {
            let s = y.get(&[0, c]) + y.get(&[1, c]);
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert!(softmax(&x, 2).is_err());
    }

    #[test]
    fn layer_norm_degenerate_rows() {
        let ones = Tensor::full([3], 1.0);
        let zeros = Tensor::zeros([3]);
        let y = layer_norm(&Tensor::vector(vec![1.0, 1.0, 1.0]), &ones, &zeros, LN_EPS).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);

        let ones = Tensor::full([2], 1.0);
        let zeros = Tensor::zeros([2]);
        let y = layer_norm(&Tensor::vector(vec![-1.0, 1.0]), &ones, &zeros, 1e-300).unwrap();
        assert_eq!(y.data(), &[-1.0, 1.0]);
        assert!(layer_norm(&Tensor::vector(vec![-1.0, 1.0]), &ones, &zeros, 0.0).is_err());
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let logits = Tensor::zeros([1, 3]);
        assert!(cross_entropy(&logits, &[3]).is_err());
        let l = cross_entropy(&logits, &[1]).unwrap();
        assert!((l.data()[0] - libm::log(3.0)).abs() < 1e-15);
    }
}
