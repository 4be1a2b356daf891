use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 64-bit matrix in row-major order. Column vectors are `n x 1`.
///
/// Entries are finite after every public operation; divergence is caught
/// at the loss/gradient boundaries rather than per element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Matrix { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_col_vector(&self) -> bool {
        self.cols == 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self (m x n) * x (n x 1)` -> `m x 1`.
    pub fn matvec(&self, x: &Matrix) -> Result<Matrix> {
        if !x.is_col_vector() || self.cols != x.rows {
            return Err(Error::Dimension(format!(
                "matvec: {}x{} * {}x{}",
                self.rows, self.cols, x.rows, x.cols
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.data.iter()) {
                acc += a * b;
            }
            *o = acc;
        }
        Ok(Matrix { rows: self.rows, cols: 1, data: out })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Matrix {
        let data = self.data.iter().map(|v| v * k).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Dimension(format!(
                "add_assign: {}x{} += {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_assign(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    fn zip_with(&self, other: &Matrix, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if !self.same_shape(other) {
            return Err(Error::Dimension(format!(
                "{}: {}x{} vs {}x{}",
                op, self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(other.data.iter()).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }
}

/// `W * x + b` for a column vector; the usual pre-activation map.
pub fn affine(w: &Matrix, x: &Matrix, b: &Matrix) -> Result<Matrix> {
    let wx = w.matvec(x)?;
    wx.add(b).map_err(|_| {
        Error::Dimension(format!(
            "affine: W {}x{}, x {}x{}, b {}x{}",
            w.rows(),
            w.cols(),
            x.rows(),
            x.cols(),
            b.rows(),
            b.cols()
        ))
    })
}

/// Numerically stable softmax of a column vector (max-shifted).
pub fn softmax(v: &Matrix) -> Matrix {
    let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.data().iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Matrix { rows: v.rows(), cols: v.cols(), data: exps.into_iter().map(|e| e / sum).collect() }
}

/// Numerically stable `log(sum(exp(v_i)))` over all entries.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Dimension("logsumexp of empty input".into()));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_weights() {
        let w = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Matrix::column(&[2.0, 3.0]);
        let b = Matrix::column(&[1.0, 1.0]);
        assert_eq!(affine(&w, &x, &b).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn affine_zero_map_returns_bias() {
        let w = Matrix::zeros(2, 3);
        let x = Matrix::column(&[5.0, -1.0, 9.0]);
        let b = Matrix::column(&[7.0, -2.0]);
        assert_eq!(affine(&w, &x, &b).unwrap().data(), &[7.0, -2.0]);
    }

    #[test]
    fn affine_matches_manual_dot_product() {
        // Independent by-hand computation of a fixed 3x2 case.
        let w = Matrix::from_vec(3, 2, vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5]).unwrap();
        let x = Matrix::column(&[4.0, -2.0]);
        let b = Matrix::column(&[0.1, -0.2, 0.3]);
        let expected = [
            0.5 * 4.0 + (-1.0) * (-2.0) + 0.1,
            2.0 * 4.0 + 0.25 * (-2.0) + (-0.2),
            -0.75 * 4.0 + 1.5 * (-2.0) + 0.3,
        ];
        let got = affine(&w, &x, &b).unwrap();
        for (g, e) in got.data().iter().zip(expected.iter()) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn affine_shape_mismatch_is_error() {
        let w = Matrix::zeros(2, 3);
        let x = Matrix::column(&[1.0, 2.0]);
        let b = Matrix::column(&[0.0, 0.0]);
        assert!(affine(&w, &x, &b).is_err());
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let s = softmax(&Matrix::column(&[0.0, 0.0, 0.0, 0.0]));
        for v in s.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_limit_case() {
        let s = softmax(&Matrix::column(&[100.0, 0.0]));
        assert!((s.data()[0] - 1.0).abs() < 1e-12);
        assert!(s.data()[1] < 1e-12);
    }

    #[test]
    fn softmax_closed_form() {
        // softmax([1,2]) = [1/(1+e), e/(1+e)]
        let s = softmax(&Matrix::column(&[1.0, 2.0]));
        assert!((s.data()[0] - 0.268941).abs() < 1e-6);
        assert!((s.data()[1] - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn logsumexp_singleton() {
        assert_eq!(logsumexp(&[3.25]).unwrap(), 3.25);
    }

    #[test]
    fn logsumexp_closed_form() {
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_shift_invariance() {
        let base = logsumexp(&[0.0, 0.0]).unwrap();
        let shifted = logsumexp(&[1000.0, 1000.0]).unwrap();
        assert!((shifted - (1000.0 + base)).abs() < 1e-9);
    }

    #[test]
    fn logsumexp_empty_is_error() {
        assert!(logsumexp(&[]).is_err());
    }
}
