//! Dense activations laid out `[channels][batch][time]`, so a convolution
//! over the whole batch is a single matrix product.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub c: usize,
    pub b: usize,
    pub t: usize,
}

impl Tensor {
    pub fn zeros(c: usize, b: usize, t: usize) -> Self {
        Self { data: alloc::vec![0.0; c * b * t], c, b, t }
    }

    pub fn from_vec(data: Vec<f64>, c: usize, b: usize, t: usize) -> Self {
        assert_eq!(data.len(), c * b * t, "tensor shape mismatch");
        Self { data, c, b, t }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.c, self.b, self.t]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, c: usize, b: usize, t: usize) -> f64 {
        self.data[(c * self.b + b) * self.t + t]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, b: usize, t: usize) -> &mut f64 {
        &mut self.data[(c * self.b + b) * self.t + t]
    }

    /// Packs row-major `[t][c]` sequences (one per batch element).
    pub fn from_sequences(seqs: &[&[f64]], c: usize) -> Self {
        let b = seqs.len();
        let t = if b == 0 { 0 } else { seqs[0].len() / c };
        let mut x = Self::zeros(c, b, t);
        for (bi, s) in seqs.iter().enumerate() {
            assert_eq!(s.len(), t * c, "sequence length mismatch");
            for ti in 0..t {
                for ci in 0..c {
                    *x.at_mut(ci, bi, ti) = s[ti * c + ci];
                }
            }
        }
        x
    }

    /// Batch element `b` as a row-major `[t][c]` sequence.
    pub fn sequence(&self, b: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.c * self.t);
        for ti in 0..self.t {
            for ci in 0..self.c {
                out.push(self.at(ci, b, ti));
            }
        }
        out
    }

    /// Feature vectors (one per batch element) as a `[features][batch][1]`
    /// tensor.
    pub fn from_columns(cols: &[&[f64]]) -> Self {
        let b = cols.len();
        let c = if b == 0 { 0 } else { cols[0].len() };
        let mut x = Self::zeros(c, b, 1);
        for (bi, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), c, "feature length mismatch");
            for (ci, v) in col.iter().enumerate() {
                *x.at_mut(ci, bi, 0) = *v;
            }
        }
        x
    }
}

/// `c = alpha·op(a)·op(b) + beta·c` for row-major operands; `ta`/`tb`
/// transpose `a`/`b`. Shapes are of the transposed operands: `m×k`, `k×n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover every index addressed by the given shapes and
    // strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}
