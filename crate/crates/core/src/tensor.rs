//! Dense row-major tensors and the raw kernels the tape is built on.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

static DETERMINISTIC: AtomicBool = AtomicBool::new(false);

/// Force single-threaded kernels. Results are identical either way (every
/// output element is reduced in the same order), but this pins execution
/// to the calling thread for reproducibility runs.
pub fn set_deterministic(on: bool) {
    DETERMINISTIC.store(on, Ordering::SeqCst);
}

pub fn is_deterministic() -> bool {
    DETERMINISTIC.load(Ordering::SeqCst)
}

/// Work (in multiply-adds) below which kernels never fan out.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Contract(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Contract(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| S::from_f64_lossy(v)).collect())
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, S::one())
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = S::one();
        }
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let len: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Extent of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    /// Product of all but the last axis.
    pub fn rows(&self) -> usize {
        self.data.len() / self.cols()
    }

    pub fn at(&self, idx: &[usize]) -> S {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: S) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {idx:?} out of bounds for {:?}", self.shape);
            acc * d + i
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64_lossy()).collect()
    }
}

fn fan_out(work: usize) -> bool {
    work >= PAR_THRESHOLD && !is_deterministic()
}

/// `c[m×n] = a[m×k] · b[k×n]`, each element summed over `p` in ascending order.
pub fn gemm<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    let row = |(i, out): (usize, &mut [S])| {
        let ar = &a[i * k..(i + 1) * k];
        for (p, &av) in ar.iter().enumerate() {
            let br = &b[p * n..(p + 1) * n];
            for (o, &bv) in out.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    };
    if fan_out(m * k * n) {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

/// `c[m×n] = a[m×k] · b[n×k]ᵀ`.
pub fn gemm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    let row = |(i, out): (usize, &mut [S])| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, o) in out.iter_mut().enumerate() {
            let br = &b[j * k..(j + 1) * k];
            let mut s = S::zero();
            for (&x, &y) in ar.iter().zip(br) {
                s += x * y;
            }
            *o = s;
        }
    };
    if fan_out(m * k * n) {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

/// `c[k×n] = a[m×k]ᵀ · b[m×n]`.
pub fn gemm_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); k * n];
    let row = |(p, out): (usize, &mut [S])| {
        for i in 0..m {
            let av = a[i * k + p];
            let br = &b[i * n..(i + 1) * n];
            for (o, &bv) in out.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    };
    if fan_out(m * k * n) {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

/// Standard normal CDF, `½·erfc(−x/√2)`; keeps full relative precision in the lower tail.
pub fn normal_cdf<S: Scalar>(x: S) -> S {
    let half = S::from_f64_lossy(0.5);
    half * (-x / S::from_f64_lossy(std::f64::consts::SQRT_2)).erfc()
}

pub fn normal_pdf<S: Scalar>(x: S) -> S {
    let inv_sqrt_2pi = S::from_f64_lossy(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(x * x) * S::from_f64_lossy(0.5)).exp()
}

/// Softmax over `axis` with per-slice max subtraction.
pub fn softmax<S: Scalar>(x: &Tensor<S>, axis: usize) -> Result<Tensor<S>> {
    if axis >= x.ndim() {
        return Err(TensorError::Contract(format!(
            "softmax axis {axis} out of range for shape {:?}",
            x.shape()
        )));
    }
    let len = x.shape()[axis];
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let outer: usize = x.shape()[..axis].iter().product();
    let mut out = x.clone();
    let d = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let idx = |a: usize| base + a * inner;
            let mut m = S::neg_infinity();
            for a in 0..len {
                m = m.max(d[idx(a)]);
            }
            let mut z = S::zero();
            for a in 0..len {
                let e = (d[idx(a)] - m).exp();
                d[idx(a)] = e;
                z += e;
            }
            for a in 0..len {
                d[idx(a)] /= z;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f64>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn gemm_variants_agree() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.5).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect(); // 3x4
        let c = gemm(&a, &b, 2, 3, 4);
        let mut bt = vec![0.0; 12];
        for p in 0..3 {
            for j in 0..4 {
                bt[j * 3 + p] = b[p * 4 + j];
            }
        }
        assert_eq!(c, gemm_nt(&a, &bt, 2, 3, 4));
        let mut at = vec![0.0; 6];
        for i in 0..2 {
            for p in 0..3 {
                at[p * 2 + i] = a[i * 3 + p];
            }
        }
        assert_eq!(c, gemm_tn(&at, &b, 3, 2, 4));
    }

    #[test]
    fn softmax_any_axis() {
        let x = Tensor::<f64>::from_f64(&[2, 2], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        let s = softmax(&x, 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5, 0.5, 0.5]);
        let s = softmax(&x, 1).unwrap();
        assert!((s.at(&[0, 0]) + s.at(&[0, 1]) - 1.0).abs() < 1e-15);
    }
}
