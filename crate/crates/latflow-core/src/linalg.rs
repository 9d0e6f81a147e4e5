//! Row-major f64 matrices and the three matmul kernels the network
//! substrate needs. Loops are ordered so the inner dimension walks
//! contiguous memory and autovectorizes.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float; // mul_add on f64 without std

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    /// Single-row matrix view of a vector (copies).
    pub fn from_row(row: &[f64]) -> Self {
        Mat {
            rows: 1,
            cols: row.len(),
            data: row.to_vec(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

// Eight independent accumulator lanes so the reduction vectorizes; a
// single accumulator serializes on the loop-carried add and runs ~10x
// slower. Plain `*`+`+` on purpose: in a no_std build `Float::mul_add`
// is a libm software-fma call, two orders of magnitude slower than the
// mul/add pipes the autovectorizer emits here.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let mut ai = a.chunks_exact(LANES);
    let mut bi = b.chunks_exact(LANES);
    for (ca, cb) in (&mut ai).zip(&mut bi) {
        for l in 0..LANES {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in ai.remainder().iter().zip(bi.remainder()) {
        tail += x * y;
    }
    acc.iter().sum::<f64>() + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (&xi, yi) in x.iter().zip(y.iter_mut()) {
        *yi += alpha * xi;
    }
}

/// `a [m x k]` times `b^T` where `b` is `[n x k]`, giving `[m x n]`.
/// Both operands are walked along their contiguous rows.
pub fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.cols, "inner dimension mismatch");
    let mut out = Mat::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        let or = out.row_mut(i);
        for (j, oj) in or.iter_mut().enumerate() {
            *oj = dot(ar, b.row(j));
        }
    }
    out
}

/// `a [m x k]` times `b [k x n]`, giving `[m x n]`.
pub fn matmul_nn(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows, "inner dimension mismatch");
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let ar = a.row(i);
        let or = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in ar.iter().enumerate() {
            axpy(aik, b.row(k), or);
        }
    }
    out
}

/// `a^T` times `b` where `a` is `[k x m]` and `b` is `[k x n]`, giving `[m x n]`.
pub fn matmul_tn(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.rows, b.rows, "inner dimension mismatch");
    let mut out = Mat::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let ar = a.row(k);
        let br = b.row(k);
        for (m, &akm) in ar.iter().enumerate() {
            axpy(akm, br, out.row_mut(m));
        }
    }
    out
}

/// Sum of each column of `a`, as a vector of length `a.cols`.
pub fn col_sums(a: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; a.cols];
    for i in 0..a.rows {
        for (o, &v) in out.iter_mut().zip(a.row(i)) {
            *o += v;
        }
    }
    out
}
