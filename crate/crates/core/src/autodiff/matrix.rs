use alloc::vec;
use alloc::vec::Vec;

use super::Real;
use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from `f64` rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    left: (rows.len(), cols),
                    right: (1, r.len()),
                });
            }
            data.extend(r.iter().map(|&v| T::of(v)));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: &[T]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Plain (untracked) product `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(product(self, false, rhs, false))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }
}

fn op_shape<T: Real>(m: &Matrix<T>, transposed: bool) -> (usize, usize, (usize, usize)) {
    if transposed {
        (m.cols, m.rows, (1, m.cols))
    } else {
        (m.rows, m.cols, (m.cols, 1))
    }
}

/// `op(a) * op(b)` where `op` optionally transposes; no shape validation.
pub(crate) fn product<T: Real>(a: &Matrix<T>, ta: bool, b: &Matrix<T>, tb: bool) -> Matrix<T> {
    let (m, k, sa) = op_shape(a, ta);
    let (_, n, sb) = op_shape(b, tb);
    let mut out = Matrix::zeros(m, n);
    T::gemm(m, k, n, &a.data, sa, &b.data, sb, T::zero(), &mut out.data);
    out
}

/// `acc += op(a) * op(b)`.
pub(crate) fn product_acc<T: Real>(
    acc: &mut Matrix<T>,
    a: &Matrix<T>,
    ta: bool,
    b: &Matrix<T>,
    tb: bool,
) {
    let (m, k, sa) = op_shape(a, ta);
    let (_, n, sb) = op_shape(b, tb);
    debug_assert_eq!(acc.shape(), (m, n));
    T::gemm(m, k, n, &a.data, sa, &b.data, sb, T::one(), &mut acc.data);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_product_is_noop() {
        let a = Matrix::<f64>::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let i = Matrix::identity(2);
        assert_eq!(i.matmul(&a).unwrap(), a);
    }

    #[test]
    fn product_shapes_and_values() {
        let a = Matrix::<f64>::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = Matrix::<f64>::from_rows(&[[1.0], [0.0], [-1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), (2, 1));
        assert_eq!(c.data(), &[-2.0, -2.0]);
        assert!(b.matmul(&a).is_err());
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Matrix::<f64>::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]]).unwrap();
        let b = Matrix::<f64>::from_rows(&[[0.5, -1.0], [2.0, 1.5]]).unwrap();
        let lhs = product(&a, false, &b, true);
        let rhs = a.matmul(&b.transpose()).unwrap();
        assert_eq!(lhs, rhs);
        let lhs = product(&a, true, &a, false);
        let rhs = a.transpose().matmul(&a).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Matrix::<f32>::from_vec(2, 2, vec![1.0; 3]).is_err());
    }
}
