//! Dense f64 linear algebra for the fixed LSTM computation graph.
//!
//! Everything here is deliberately plain: row-major `Vec<f64>` storage,
//! single-threaded loops, no reduction-order tricks. Identical inputs give
//! bit-identical outputs on one platform, which is what makes the gradient
//! checks and the determinism guarantees downstream meaningful.

mod gradcheck;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_EPSILON};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("{op}: dimension mismatch, left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    BadLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("target id {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
}

/// Row-major dense matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Checked constructor: rejects length mismatches and NaN/Inf entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix, NumericError> {
        if data.len() != rows * cols {
            return Err(NumericError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(NumericError::NonFinite {
                    row: i / cols.max(1),
                    col: i % cols.max(1),
                });
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, NumericError> {
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            if r.len() != ncols {
                return Err(NumericError::BadLength {
                    rows: rows.len(),
                    cols: ncols,
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), ncols, data)
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Standard product; ikj loop order keeps the inner loop contiguous.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, NumericError> {
        if self.cols != rhs.rows {
            return Err(self.dim_err("matmul", rhs));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lrow = self.row(i);
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in lrow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ` without materializing the transpose.
    pub fn matmul_bt(&self, rhs: &Matrix) -> Result<Matrix, NumericError> {
        if self.cols != rhs.cols {
            return Err(self.dim_err("matmul_bt", rhs));
        }
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let lrow = self.row(i);
            for j in 0..rhs.rows {
                let rrow = rhs.row(j);
                let mut acc = 0.0;
                for (&a, &b) in lrow.iter().zip(rrow) {
                    acc += a * b;
                }
                out.data[i * rhs.rows + j] = acc;
            }
        }
        Ok(out)
    }

    /// `self += col ⊗ row` (outer product accumulate), for gradient updates.
    pub fn add_outer(&mut self, col: &[f64], row: &[f64]) {
        debug_assert_eq!(col.len(), self.rows);
        debug_assert_eq!(row.len(), self.cols);
        for (i, &c) in col.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let orow = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (o, &r) in orow.iter_mut().zip(row) {
                *o += c * r;
            }
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sigmoid(&self) -> Matrix {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Matrix {
        self.map(f64::tanh)
    }

    pub fn add_assign(&mut self, rhs: &Matrix) -> Result<(), NumericError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(self.dim_err("add_assign", rhs));
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Sum of squared entries.
    pub fn sq_sum(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn dim_err(&self, op: &'static str, rhs: &Matrix) -> NumericError {
        NumericError::DimensionMismatch {
            op,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: rhs.rows,
            right_cols: rhs.cols,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-wise softmax, stabilized by subtracting each row's max.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean softmax cross-entropy over rows plus its gradient.
///
/// loss = mean_r −log softmax(logits_r)[target_r]
/// dlogits = (softmax − onehot) / batch
pub fn softmax_xent(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix), NumericError> {
    if targets.len() != logits.rows() {
        return Err(NumericError::BadLength {
            rows: logits.rows(),
            cols: 1,
            len: targets.len(),
        });
    }
    for &t in targets {
        if t >= logits.cols() {
            return Err(NumericError::TargetOutOfRange {
                target: t,
                classes: logits.cols(),
            });
        }
    }
    let batch = logits.rows() as f64;
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln() + max;
        loss += log_sum - row[targets[r]];
        let drow = dlogits.row_mut(r);
        for (c, &v) in row.iter().enumerate() {
            drow[c] = ((v - max).exp() / sum) / batch;
        }
        drow[targets[r]] -= 1.0 / batch;
    }
    Ok((loss / batch, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 2, 3);
        let i2 = Matrix::identity(2);
        assert_eq!(i2.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_hand_product() {
        let a = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Matrix::from_vec(2, 1, vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_zero() {
        let z = Matrix::zeros(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_matrix(&mut rng, 4, 2);
        let c = z.matmul(&m).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&b),
            Err(NumericError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        let r = Matrix::from_vec(1, 2, vec![1.0, f64::NAN]);
        assert!(matches!(r, Err(NumericError::NonFinite { row: 0, col: 1 })));
    }

    #[test]
    fn sigmoid_tanh_anchors() {
        let m = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        assert_eq!(m.sigmoid().data()[0], 0.5);
        assert_eq!(m.tanh().data()[0], 0.0);
    }

    #[test]
    fn sigmoid_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-20.0..20.0);
            let s = sigmoid(x) + sigmoid(-x);
            assert!((s - 1.0).abs() < 1e-12, "sigmoid symmetry violated at {x}");
        }
    }

    #[test]
    fn transpose_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let lhs = a.matmul(&b).unwrap().transpose();
        let rhs = b.transpose().matmul(&a.transpose()).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_bt_matches_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 3, 5);
        let b = random_matrix(&mut rng, 4, 5);
        let fast = a.matmul_bt(&b).unwrap();
        let slow = a.matmul(&b.transpose()).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_matrix(&mut rng, 5, 9);
        let s = softmax_rows(&m);
        for r in 0..s.rows() {
            let sum: f64 = s.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_xent_uniform_logits() {
        // All-zero logits over V classes: loss = ln V.
        let v = 8;
        let logits = Matrix::zeros(3, v);
        let (loss, _) = softmax_xent(&logits, &[0, 3, 7]).unwrap();
        assert!((loss - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_xent_confident_logit() {
        // Large logit at the target drives the loss toward zero.
        let mut logits = Matrix::zeros(1, 5);
        logits.set(0, 2, 50.0);
        let (loss, _) = softmax_xent(&logits, &[2]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn softmax_xent_target_out_of_range() {
        let logits = Matrix::zeros(1, 4);
        assert!(matches!(
            softmax_xent(&logits, &[4]),
            Err(NumericError::TargetOutOfRange {
                target: 4,
                classes: 4
            })
        ));
    }

    #[test]
    fn softmax_xent_gradient_matches_finite_differences() {
        // Central finite differences on random 3x5 logits.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let logits = random_matrix(&mut rng, 3, 5);
        let targets = [1, 4, 0];
        let (_, dlogits) = softmax_xent(&logits, &targets).unwrap();
        let f = |point: &[f64]| {
            let m = Matrix::from_vec(3, 5, point.to_vec()).unwrap();
            softmax_xent(&m, &targets).unwrap().0
        };
        let report = grad_check(
            "softmax_xent",
            f,
            logits.data(),
            dlogits.data(),
            DEFAULT_EPSILON,
        );
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn grad_check_linear_map_is_exact() {
        // Central differences are exact for linear functions up to rounding.
        let coeffs = [1.5, -2.0, 0.25, 3.0];
        let f = |point: &[f64]| point.iter().zip(&coeffs).map(|(x, c)| x * c).sum::<f64>();
        let point = [0.3, -0.7, 1.1, 0.0];
        let report = grad_check("linear", f, &point, &coeffs, DEFAULT_EPSILON);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }
}
