//! Dense row-major 2-D tensor of 64-bit reals — the universal numeric
//! carrier for observations, latents, weights and gradients.

use crate::error::{Error, Result};
use rand::Rng;

/// Stabilizer added to Euclidean norms before dividing, so zero rows and
/// columns normalize to near-zero vectors instead of NaN.
pub const EPS_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Tensor { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![value] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "tensor data length {} does not match shape {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Config("ragged rows in tensor literal".into()));
        }
        Ok(Tensor { rows: r, cols: c, data: rows.concat() })
    }

    /// Entries i.i.d. uniform on `(lo, hi)`.
    pub fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor { rows, cols, data }
    }

    /// Entries i.i.d. Gaussian with the given mean and standard deviation.
    pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, mean: f64, sd: f64) -> Self {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(mean, sd).expect("finite sd");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        Tensor { rows, cols, data }
    }

    /// A random d×d orthogonal matrix (Gram–Schmidt on a Gaussian draw).
    pub fn random_orthogonal<R: Rng>(rng: &mut R, d: usize) -> Self {
        loop {
            let mut m = Tensor::gaussian(rng, d, d, 0.0, 1.0);
            let mut ok = true;
            for i in 0..d {
                for j in 0..i {
                    let dot: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
                    let prev = m.row(j).to_vec();
                    for (v, p) in m.row_mut(i).iter_mut().zip(&prev) {
                        *v -= dot * p;
                    }
                }
                let norm: f64 = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < 1e-10 {
                    ok = false;
                    break;
                }
                for v in m.row_mut(i) {
                    *v /= norm;
                }
            }
            if ok {
                return m;
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite values in {what}")))
        }
    }

    /// Rows of `self` selected by `idx`, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let mut out = Tensor::zeros(idx.len(), self.cols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }

    /// Columns `lo..hi` of `self`.
    pub fn slice_cols(&self, lo: usize, hi: usize) -> Tensor {
        assert!(lo <= hi && hi <= self.cols, "column slice out of range");
        let mut out = Tensor::zeros(self.rows, hi - lo);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[lo..hi]);
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "add shape mismatch");
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "sub shape mismatch");
        self.zip(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "hadamard shape mismatch");
        self.zip(other, |a, b| a * b)
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Tensor { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self + 1·row`, broadcasting a 1×cols row over every row of `self`.
    pub fn add_row(&self, row: &Tensor) -> Tensor {
        assert_eq!(row.rows, 1, "add_row expects a 1xN row vector");
        assert_eq!(row.cols, self.cols, "add_row width mismatch");
        let mut out = self.clone();
        for i in 0..out.rows {
            for (o, b) in out.row_mut(i).iter_mut().zip(&row.data) {
                *o += b;
            }
        }
        out
    }

    pub fn relu(&self) -> Tensor {
        self.map(|v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self · other`, shapes (m×k)·(k×n).
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = self.row(i);
            let orow = &mut out[i * n..(i + 1) * n];
            for (l, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[l * n..(l + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Tensor { rows: m, cols: n, data: out }
    }

    /// `self · otherᵀ`, shapes (m×k)·(n×k)ᵀ.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dimension mismatch");
        let (m, n) = (self.rows, other.rows);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = self.row(i);
            for j in 0..n {
                let brow = other.row(j);
                let mut acc = 0.0;
                for (a, b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                out[i * n + j] = acc;
            }
        }
        Tensor { rows: m, cols: n, data: out }
    }

    /// `selfᵀ · other`, shapes (k×m)ᵀ·(k×n).
    pub fn matmul_tn(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dimension mismatch");
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for l in 0..k {
            let arow = self.row(l);
            let brow = other.row(l);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Tensor { rows: m, cols: n, data: out }
    }

    /// Each row scaled to unit Euclidean norm, stabilized as
    /// `x / (‖x‖ + EPS_NORM)` so zero rows stay finite.
    pub fn l2_normalize_rows(&self) -> Tensor {
        let mut out = self.clone();
        for i in 0..out.rows {
            let row = out.row_mut(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = 1.0 / (norm + EPS_NORM);
            for v in row {
                *v *= s;
            }
        }
        out
    }

    /// Each column scaled to unit Euclidean norm with the same stabilizer.
    pub fn l2_normalize_cols(&self) -> Tensor {
        let mut out = self.clone();
        for j in 0..out.cols {
            let mut norm = 0.0;
            for i in 0..out.rows {
                let v = out.data[i * out.cols + j];
                norm += v * v;
            }
            let s = 1.0 / (norm.sqrt() + EPS_NORM);
            for i in 0..out.rows {
                out.data[i * out.cols + j] *= s;
            }
        }
        out
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn concat_cols(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows, other.rows, "concat_cols row mismatch");
        let mut out = Tensor::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            out.row_mut(i)[..self.cols].copy_from_slice(self.row(i));
            out.row_mut(i)[self.cols..].copy_from_slice(other.row(i));
        }
        out
    }

    /// Row vector of stable log-sum-exp over each row: `ln Σ_j exp(x_ij)`.
    pub fn log_sum_exp_rows(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, 1);
        for i in 0..self.rows {
            let row = self.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|&v| (v - m).exp()).sum();
            out.data[i] = m + s.ln();
        }
        out
    }

    /// Main diagonal of a square matrix as a column vector.
    pub fn diag(&self) -> Tensor {
        assert_eq!(self.rows, self.cols, "diag expects a square matrix");
        let data = (0..self.rows).map(|i| self.data[i * self.cols + i]).collect();
        Tensor { rows: self.rows, cols: 1, data }
    }

    /// Row-wise dot products of two equal-shape matrices, as a column vector.
    pub fn row_dot(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "row_dot shape mismatch");
        let mut out = Tensor::zeros(self.rows, 1);
        for i in 0..self.rows {
            out.data[i] = self.row(i).iter().zip(other.row(i)).map(|(a, b)| a * b).sum();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn matmul_variants_agree() {
        let mut rng = crate::rng::stream(3, "t");
        let a = Tensor::uniform(&mut rng, 4, 3, -1.0, 1.0);
        let b = Tensor::uniform(&mut rng, 3, 5, -1.0, 1.0);
        let c = a.matmul(&b);
        let c_nt = a.matmul_nt(&b.transpose());
        let c_tn = a.transpose().matmul_tn(&b);
        for ((x, y), z) in c.data().iter().zip(c_nt.data()).zip(c_tn.data()) {
            assert!((x - y).abs() < 1e-12);
            assert!((x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rows_basic() {
        let t = Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let n = t.l2_normalize_rows();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-12);
        assert!((n.get(0, 1) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn normalize_zero_row_is_finite() {
        let t = Tensor::zeros(1, 4);
        let n = t.l2_normalize_rows();
        assert!(n.is_finite());
        let norm = n.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-6);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let t = Tensor::from_rows(&[vec![1000.0, 1000.0]]).unwrap();
        let l = t.log_sum_exp_rows();
        assert!((l.get(0, 0) - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }
}
