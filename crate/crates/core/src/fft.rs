//! Thin wrappers over `rustfft` for square 1D/2D arrays.
//!
//! Two-dimensional transforms run row FFTs, transpose, and run row FFTs
//! again. The `*_transposed` variants skip the final transpose and leave the
//! spectrum in transposed (`[kx][ky]`) order, which is all that is needed
//! when the subsequent operation is symmetric in the two axes.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct SquareFft {
    dims: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Clone for SquareFft {
    fn clone(&self) -> Self {
        SquareFft {
            dims: self.dims,
            n: self.n,
            forward: Arc::clone(&self.forward),
            inverse: Arc::clone(&self.inverse),
            scratch: vec![Complex64::default(); self.scratch.len()],
            tmp: Vec::new(),
        }
    }
}

impl SquareFft {
    pub fn new(dims: usize, n: usize) -> Self {
        assert!(dims == 1 || dims == 2, "dims must be 1 or 2");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        SquareFft {
            dims,
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            tmp: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn rows(&mut self, buf: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        plan.process_with_scratch(buf, &mut self.scratch);
    }

    /// Row transforms skipping rows that are entirely zero.
    fn sparse_rows(&mut self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inverse } else { &self.forward };
        for row in buf.chunks_mut(n) {
            if row.iter().any(|v| v.re != 0.0 || v.im != 0.0) {
                plan.process_with_scratch(row, &mut self.scratch);
            }
        }
    }

    fn transpose_in_place(&mut self, buf: &mut [Complex64]) {
        let n = self.n;
        self.tmp.resize(n * n, Complex64::default());
        transpose(buf, &mut self.tmp, n);
        buf.copy_from_slice(&self.tmp);
    }

    /// Unnormalized forward transform, natural output order.
    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.forward_transposed(buf);
        if self.dims == 2 {
            self.transpose_in_place(buf);
        }
    }

    /// Inverse transform scaled by `1 / len`, natural input order.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        if self.dims == 2 {
            self.transpose_in_place(buf);
        }
        self.inverse_from_transposed(buf);
    }

    /// Unnormalized forward transform leaving the spectrum transposed.
    pub fn forward_transposed(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len());
        if self.dims == 2 {
            self.sparse_rows(buf, false);
        } else {
            self.rows(buf, false);
        }
        if self.dims == 2 {
            self.transpose_in_place(buf);
            self.rows(buf, false);
        }
    }

    /// Inverse of [`forward_transposed`](Self::forward_transposed), scaled by
    /// `1 / len`.
    pub fn inverse_from_transposed(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len());
        self.rows(buf, true);
        if self.dims == 2 {
            self.transpose_in_place(buf);
            self.rows(buf, true);
        }
        let s = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }
}

/// Out-of-place blocked transpose of an `n x n` row-major array.
pub fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for bi in (0..n).step_by(B) {
        for bj in (0..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                for j in bj..(bj + B).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

/// FFT bin index `k` to signed frequency index for length `n`.
pub fn signed_bin(k: usize, n: usize) -> f64 {
    if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v * Complex64::from_polar(
                            1.0,
                            -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64,
                        )
                    })
                    .sum()
            })
            .collect()
    }

    fn sample(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos() * 0.5))
            .collect()
    }

    #[test]
    fn forward_matches_naive_1d() {
        let x = sample(12);
        let mut y = x.clone();
        SquareFft::new(1, 12).forward(&mut y);
        for (a, b) in y.iter().zip(naive_dft(&x)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn two_d_round_trip_and_transposed_order() {
        let n = 8;
        let x = sample(n * n);
        let mut f = SquareFft::new(2, n);
        let mut nat = x.clone();
        f.forward(&mut nat);
        let mut tr = x.clone();
        f.forward_transposed(&mut tr);
        for i in 0..n {
            for j in 0..n {
                assert!((nat[i * n + j] - tr[j * n + i]).norm() < 1e-12);
            }
        }
        f.inverse_from_transposed(&mut tr);
        f.inverse(&mut nat);
        for k in 0..n * n {
            assert!((tr[k] - x[k]).norm() < 1e-12);
            assert!((nat[k] - x[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn two_d_is_separable_dft() {
        let n = 6;
        let x = sample(n * n);
        let mut y = x.clone();
        SquareFft::new(2, n).forward(&mut y);
        // rows then columns with the naive DFT
        let mut r: Vec<Complex64> = Vec::new();
        for row in x.chunks(n) {
            r.extend(naive_dft(row));
        }
        for c in 0..n {
            let col: Vec<_> = (0..n).map(|i| r[i * n + c]).collect();
            let fc = naive_dft(&col);
            for i in 0..n {
                assert!((fc[i] - y[i * n + c]).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn signed_bins() {
        assert_eq!(signed_bin(0, 8), 0.0);
        assert_eq!(signed_bin(3, 8), 3.0);
        assert_eq!(signed_bin(4, 8), -4.0);
        assert_eq!(signed_bin(7, 8), -1.0);
    }
}
