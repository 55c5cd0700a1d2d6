use serde::{Deserialize, Serialize};

use crate::error::{GamcError, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor2::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Tensor2 {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(GamcError::Contract(format!(
                "tensor data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(GamcError::Contract(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor2 {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Tensor2 {
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(if self.cols == 0 { 0 } else { self.rows })
    }

    /// Scalar value of a 1x1 tensor.
    pub fn item(&self) -> Result<f64> {
        if self.shape() != (1, 1) {
            return Err(GamcError::Contract(format!(
                "expected a scalar, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same(&self, other: &Tensor2, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(GamcError::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor2, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor2> {
        self.check_same(other, op)?;
        Ok(Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor2 {
        self.map(|v| v * c)
    }

    pub fn relu(&self) -> Tensor2 {
        self.map(|v| v.max(0.0))
    }

    /// `self += other` in place.
    pub fn add_assign(&mut self, other: &Tensor2) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += c * other` in place.
    pub fn axpy(&mut self, c: f64, other: &Tensor2) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    /// Adds the `1 x cols` row vector `bias` to every row.
    pub fn add_row(&self, bias: &Tensor2) -> Result<Tensor2> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(GamcError::shape("add_row", self.shape(), bias.shape()));
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (a, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *a += b;
            }
        }
        Ok(out)
    }

    /// Column-wise sum over all rows, giving `1 x cols`.
    pub fn row_sum(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(1, self.cols);
        for row in self.row_iter() {
            for (a, b) in out.data.iter_mut().zip(row) {
                *a += b;
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_dot(&self, other: &Tensor2) -> Result<f64> {
        self.check_same(other, "frobenius_dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Rows `start..end` as a new tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor2> {
        if start > end || end > self.rows {
            return Err(GamcError::Contract(format!(
                "row range {start}..{end} out of bounds for {} rows",
                self.rows
            )));
        }
        Ok(Tensor2 {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        })
    }

    /// Stacks tensors with equal column counts vertically.
    pub fn vstack(parts: &[&Tensor2]) -> Result<Tensor2> {
        let cols = parts.first().map_or(0, |t| t.cols);
        let mut data = Vec::with_capacity(parts.iter().map(|t| t.len()).sum());
        let mut rows = 0;
        for t in parts {
            if t.cols != cols {
                return Err(GamcError::shape("vstack", (rows, cols), t.shape()));
            }
            data.extend_from_slice(&t.data);
            rows += t.rows;
        }
        Ok(Tensor2 { rows, cols, data })
    }

    /// Copy with the rows named in `perm_of` reordered so that output row
    /// `i` is input row `perm_of[i]`.
    pub fn gather_rows(&self, perm_of: &[usize]) -> Result<Tensor2> {
        let mut out = Tensor2::zeros(perm_of.len(), self.cols);
        for (i, &src) in perm_of.iter().enumerate() {
            if src >= self.rows {
                return Err(GamcError::Contract(format!(
                    "row index {src} out of bounds for {} rows",
                    self.rows
                )));
            }
            out.row_mut(i).copy_from_slice(self.row(src));
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(GamcError::shape("matmul", self.shape(), other.shape()));
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        gemm(1.0, self, Trans::No, other, Trans::No, 0.0, &mut out);
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Tensor2) -> Result<f64> {
        self.check_same(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Trans {
    No,
    Yes,
}

/// `c = alpha * op(a) * op(b) + beta * c`. Shapes must already agree.
pub(crate) fn gemm(alpha: f64, a: &Tensor2, ta: Trans, b: &Tensor2, tb: Trans, beta: f64, c: &mut Tensor2) {
    let (m, k) = match ta {
        Trans::No => (a.rows, a.cols),
        Trans::Yes => (a.cols, a.rows),
    };
    let (k2, n) = match tb {
        Trans::No => (b.rows, b.cols),
        Trans::Yes => (b.cols, b.rows),
    };
    debug_assert_eq!(k, k2);
    debug_assert_eq!(c.shape(), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.data.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = match ta {
        Trans::No => (a.cols as isize, 1),
        Trans::Yes => (1, a.cols as isize),
    };
    let (rsb, csb) = match tb {
        Trans::No => (b.cols as isize, 1),
        Trans::Yes => (1, b.cols as isize),
    };
    // SAFETY: dimensions and strides describe the row-major buffers of `a`,
    // `b` and `c` exactly, and `c` does not alias either input.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor2 {
        Tensor2::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let a = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t(&[&[5.0], &[6.0]]);
        assert_eq!(a.matmul(&b).unwrap(), t(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn identity_left_multiplication() {
        let m = t(&[&[1.5, -2.0, 0.25], &[3.0, 4.0, 9.0]]);
        assert_eq!(Tensor2::identity(2).matmul(&m).unwrap(), m);
        assert_eq!(m.matmul(&Tensor2::identity(3)).unwrap(), m);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = Tensor2::zeros(2, 3).matmul(&Tensor2::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3 vs 2x3"), "{msg}");
    }

    #[test]
    fn transposed_gemm_matches_explicit_transpose() {
        let a = t(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = t(&[&[1.0, 0.5], &[-1.0, 2.0]]);
        let mut c = Tensor2::zeros(3, 2);
        gemm(1.0, &a, Trans::Yes, &b, Trans::No, 0.0, &mut c);
        assert_eq!(c, a.transpose().matmul(&b).unwrap());
        let mut d = Tensor2::zeros(2, 2);
        gemm(1.0, &a, Trans::No, &a, Trans::Yes, 0.0, &mut d);
        assert_eq!(d, a.matmul(&a.transpose()).unwrap());
    }

    #[test]
    fn relu_and_frobenius() {
        assert_eq!(t(&[&[-1.0, 2.0]]).relu(), t(&[&[0.0, 2.0]]));
        let m = t(&[&[1.0, -2.0], &[3.0, 0.5]]);
        let n = m.frobenius_norm();
        assert!((m.frobenius_dot(&m).unwrap() - n * n).abs() < 1e-12);
    }

    #[test]
    fn zero_inner_dimension() {
        let a = Tensor2::zeros(3, 0);
        let b = Tensor2::zeros(0, 2);
        assert_eq!(a.matmul(&b).unwrap(), Tensor2::zeros(3, 2));
    }
}
