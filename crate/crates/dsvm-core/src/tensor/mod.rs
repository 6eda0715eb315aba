//! Dense row-major f64 arrays and the reverse-mode autodiff graph built on
//! them. Arrays are deliberately plain (shape + flat buffer); every operation
//! is single-threaded and allocation-order deterministic so that repeated
//! runs are bitwise identical.

mod autodiff;
mod spatial;

pub use autodiff::{Gradients, Graph, Tensor};
pub use spatial::rearrange;

/// Dense row-major array of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct Arr {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Arr {
    pub fn zeros(shape: &[usize]) -> Arr {
        let n = shape.iter().product();
        Arr { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], v: f64) -> Arr {
        let n = shape.iter().product();
        Arr { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Arr {
        let n: usize = shape.iter().product();
        assert_eq!(n, data.len(), "shape {shape:?} does not match data length {}", data.len());
        Arr { shape: shape.to_vec(), data }
    }

    pub fn scalar(v: f64) -> Arr {
        Arr { shape: vec![], data: vec![v] }
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

    /// Value of a scalar (or single-element) array.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on array of len {}", self.data.len());
        self.data[0]
    }

    /// Number of rows when viewed as 2-D (first dim; 1 for scalars).
    pub fn rows(&self) -> usize {
        *self.shape.first().unwrap_or(&1)
    }

    /// Number of columns when viewed as 2-D (product of trailing dims).
    pub fn cols(&self) -> usize {
        if self.shape.len() <= 1 {
            if self.shape.is_empty() { 1 } else { self.shape[0] }
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        let c = self.cols();
        self.data[i * c + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    /// Reinterpret the buffer under a new shape of equal size.
    pub fn reshaped(mut self, shape: &[usize]) -> Arr {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.data.len(), "reshape {:?} -> {shape:?}", self.shape);
        self.shape = shape.to_vec();
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Arr {
        Arr {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Arr) -> Arr {
        assert_eq!(self.shape, other.shape);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Arr { shape: self.shape.clone(), data }
    }

    pub fn sub(&self, other: &Arr) -> Arr {
        assert_eq!(self.shape, other.shape);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Arr { shape: self.shape.clone(), data }
    }

    pub fn scale(&self, s: f64) -> Arr {
        self.map(|x| x * s)
    }

    /// self += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &Arr) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// 2-D matrix product: (m x k) @ (k x n).
    pub fn matmul(&self, other: &Arr) -> Arr {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Arr { shape: vec![m, n], data: out }
    }
}

/// c (m x n) += a (m x k) @ b (k x n), all row-major. ikj order so the inner
/// loop runs over contiguous rows of b and c.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}
