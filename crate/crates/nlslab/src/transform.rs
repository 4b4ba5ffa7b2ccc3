//! Sine-basis spectral transforms on the offset radial grid.
//!
//! The reduced field lives on half-integer nodes r_j = (j+1/2) h with
//! Dirichlet ends at r = 0 and r = R.  The matching orthogonal basis is
//! e_k(j) = sin(pi k (j+1/2)/N) for k = 1..=N (a DST-II / DST-III pair),
//! realized here through a single complex FFT of length 4N so the transforms
//! apply directly to complex samples.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct SinePlan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SinePlan {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        SinePlan {
            n,
            forward: planner.plan_fft_forward(4 * n),
            inverse: planner.plan_fft_inverse(4 * n),
        }
    }

    /// Normalization factor turning the raw sine sums into expansion
    /// coefficients: 2/N for k < N, 1/N for the top mode k = N.
    pub fn mode_norm(&self, k: usize) -> f64 {
        debug_assert!(k >= 1 && k <= self.n);
        if k == self.n {
            1.0 / self.n as f64
        } else {
            2.0 / self.n as f64
        }
    }

    /// Raw sine sums s_k = sum_j v_j sin(pi k (j+1/2)/N), k = 1..=N,
    /// returned with s_k at index k-1.
    pub fn sine_sums(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(v.len(), n);
        let mut buf = vec![Complex64::new(0.0, 0.0); 4 * n];
        for (j, &x) in v.iter().enumerate() {
            buf[2 * j + 1] = x;
            buf[4 * n - 1 - 2 * j] = -x;
        }
        self.forward.process(&mut buf);
        let half_i = Complex64::new(0.0, 0.5);
        (1..=n).map(|k| half_i * buf[k]).collect()
    }

    /// Evaluates sum_{k=1}^{N} b_k sin(pi k (j+1/2)/N) at every node j.
    pub fn eval_sine(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut buf = vec![Complex64::new(0.0, 0.0); 4 * n];
        for (i, &c) in b.iter().enumerate() {
            let k = i + 1;
            buf[k] = c;
            buf[4 * n - k] = -c;
        }
        self.inverse.process(&mut buf);
        let minus_half_i = Complex64::new(0.0, -0.5);
        (0..n).map(|j| minus_half_i * buf[2 * j + 1]).collect()
    }

    /// Evaluates sum_{k=1}^{N} b_k cos(pi k (j+1/2)/N) at every node j.
    pub fn eval_cosine(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut buf = vec![Complex64::new(0.0, 0.0); 4 * n];
        for (i, &c) in b.iter().enumerate() {
            let k = i + 1;
            buf[k] = c;
            buf[4 * n - k] += c;
        }
        self.inverse.process(&mut buf);
        (0..n).map(|j| 0.5 * buf[2 * j + 1]).collect()
    }
}

impl std::fmt::Debug for SinePlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SinePlan").field("n", &self.n).finish()
    }
}
