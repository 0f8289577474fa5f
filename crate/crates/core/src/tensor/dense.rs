use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: expected {expected}, got shape {shape:?}")]
    Rank { op: &'static str, expected: &'static str, shape: Vec<usize> },
    #[error("{op}: empty axis in shape {shape:?}")]
    EmptyAxis { op: &'static str, shape: Vec<usize> },
    #[error("index {index} out of range for {len} rows")]
    Index { index: usize, len: usize },
    #[error("data length {len} does not match shape {shape:?}")]
    Length { len: usize, shape: Vec<usize> },
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
}

/// Dense row-major tensor of `f64`. A scalar has an empty shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub(crate) fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape { op, left: a.shape.clone(), right: b.shape.clone() }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor, TensorError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::Length { len: data.len(), shape });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor { shape: Vec::new(), data: vec![x] }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor, TensorError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn eye(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Rows and columns, viewing a vector as one row and a scalar as 1×1.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => (self.shape[..self.shape.len() - 1].iter().product(), *self.shape.last().unwrap()),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dims2().1 + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.dims2().1;
        &self.data[i * c..(i + 1) * c]
    }

    fn require_matrix(&self, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::Rank { op, expected: "a matrix", shape: self.shape.clone() }),
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        let (n, k) = self.require_matrix("matmul")?;
        let (k2, m) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", self, other));
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b = &other.data[p * m..(p + 1) * m];
                for (o, bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Ok(Tensor { shape: vec![n, m], data: out })
    }

    pub fn transpose(&self) -> Result<Tensor, TensorError> {
        let (r, c) = self.require_matrix("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor { shape: vec![c, r], data: out })
    }

    pub fn zip(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, TensorError> {
        if self.shape != other.shape {
            return Err(mismatch(op, self, other));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|x| f(*x)).collect() }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Applies `f` to each row of the last axis.
    pub(crate) fn map_rows(&self, op: &'static str, f: impl Fn(&[f64], &mut [f64])) -> Result<Tensor, TensorError> {
        let (r, c) = self.dims2();
        if c == 0 {
            return Err(TensorError::EmptyAxis { op, shape: self.shape.clone() });
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            f(&self.data[i * c..(i + 1) * c], &mut out[i * c..(i + 1) * c]);
        }
        Ok(Tensor { shape: self.shape.clone(), data: out })
    }

    /// Softmax along `axis` (0 or the last axis of a matrix, or 0 of a vector).
    pub fn softmax(&self, axis: usize) -> Result<Tensor, TensorError> {
        self.along(axis, "softmax", |t| t.map_rows("softmax", softmax_row))
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor, TensorError> {
        self.along(axis, "log_softmax", |t| t.map_rows("log_softmax", log_softmax_row))
    }

    fn along(
        &self,
        axis: usize,
        op: &'static str,
        f: impl Fn(&Tensor) -> Result<Tensor, TensorError>,
    ) -> Result<Tensor, TensorError> {
        let last = self.shape.len().saturating_sub(1);
        if axis == last {
            f(self)
        } else if axis == 0 && self.shape.len() == 2 {
            f(&self.transpose()?)?.transpose()
        } else {
            Err(TensorError::Rank { op, expected: "axis within rank", shape: self.shape.clone() })
        }
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<f64, TensorError> {
        let logp = self.log_softmax(self.shape.len().saturating_sub(1))?;
        let (r, c) = self.dims2();
        if targets.len() != r {
            return Err(TensorError::Shape { op: "cross_entropy", left: self.shape.clone(), right: vec![targets.len()] });
        }
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(TensorError::Index { index: t, len: c });
            }
            total -= logp.data[i * c + t];
        }
        Ok(total / r as f64)
    }

    /// Rows of `self` selected by `indices`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor, TensorError> {
        let (r, c) = self.require_matrix("embedding_lookup")?;
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(TensorError::Index { index: i, len: r });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Tensor { shape: vec![indices.len(), c], data })
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn log_softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for (o, v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}

pub(crate) const GELU_C: f64 = 0.797_884_560_802_865_4;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let m = Tensor::matrix(3, 3, (0..9).map(|x| x as f64 * 0.5 - 1.0).collect()).unwrap();
        assert_eq!(Tensor::eye(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = Tensor::zeros(&[2, 3]).matmul(&Tensor::zeros(&[4, 5])).unwrap_err();
        assert_eq!(err, TensorError::Shape { op: "matmul", left: vec![2, 3], right: vec![4, 5] });
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[4, 5]"));
    }

    #[test]
    fn uniform_softmax() {
        let s = Tensor::new(vec![3], vec![0.0; 3]).unwrap().softmax(0).unwrap();
        for v in s.data {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_along_first_axis() {
        let t = Tensor::from_rows(&[vec![1.0, 5.0], vec![2.0, -1.0]]).unwrap();
        let s = t.softmax(0).unwrap();
        assert!((s.at(0, 0) + s.at(1, 0) - 1.0).abs() < 1e-12);
        assert!(t.softmax(2).is_err());
    }

    #[test]
    fn confident_cross_entropy_is_near_zero() {
        let logits = Tensor::matrix(1, 3, vec![20.0, 0.0, 0.0]).unwrap();
        let ce = logits.cross_entropy(&[0]).unwrap();
        assert!((ce - 4.122307e-9).abs() < 1e-14, "{ce}");
    }

    #[test]
    fn empty_axis_is_an_error() {
        assert!(matches!(Tensor::zeros(&[2, 0]).softmax(1), Err(TensorError::EmptyAxis { .. })));
    }

    #[test]
    fn lookup_returns_rows() {
        let table = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(table.gather_rows(&[2, 0]).unwrap().data, [5.0, 6.0, 1.0, 2.0]);
        assert_eq!(table.gather_rows(&[3]), Err(TensorError::Index { index: 3, len: 3 }));
    }

    #[test]
    fn gelu_at_zero() {
        assert_eq!(gelu(0.0), 0.0);
        let h = 1e-6;
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn length_must_match_shape() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert_eq!(Tensor::scalar(2.0).dims2(), (1, 1));
    }
}
