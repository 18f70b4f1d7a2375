//! Fractional differencing and ARMA filtering between regression residuals
//! `ε_t` and innovations `Z_t`:
//!
//! ```text
//! φ(B) (1 - B)^d ε_t = θ(B) Z_t,   φ(B) = 1 - Σ φ_i B^i,   θ(B) = 1 + Σ θ_i B^i
//! ```
//!
//! The fractional operator is truncated after `truncation` lags and all
//! pre-sample values are zero, which gives the conditional likelihood used
//! for estimation. [`inverse_filter`] solves the truncated recursion exactly,
//! so the two directions are inverse to each other up to rounding.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Default number of lags kept from the expansion of `(1 - B)^d`.
pub const DEFAULT_TRUNCATION: usize = 1000;

/// Above this many multiply-adds the fractional filter switches to FFT
/// convolution.
pub(crate) const DIRECT_CONVOLUTION_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArfimaParams {
    pub d: f64,
    /// `φ_1 … φ_j`
    pub ar: Vec<f64>,
    /// `θ_1 … θ_q`
    pub ma: Vec<f64>,
    pub truncation: usize,
}

impl ArfimaParams {
    pub fn new(d: f64, ar: Vec<f64>, ma: Vec<f64>, truncation: usize) -> Result<Self> {
        let p = Self {
            d,
            ar,
            ma,
            truncation,
        };
        p.validate()?;
        Ok(p)
    }

    /// `d = 0`, no AR or MA terms.
    pub fn identity() -> Self {
        Self {
            d: 0.0,
            ar: Vec::new(),
            ma: Vec::new(),
            truncation: DEFAULT_TRUNCATION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.abs() < 0.5) {
            return Err(invalid(format!("fractional order d = {} is outside (-0.5, 0.5)", self.d)));
        }
        if self.truncation < 1 {
            return Err(invalid("truncation must be at least one lag"));
        }
        if self.ar.iter().chain(&self.ma).any(|v| !v.is_finite()) {
            return Err(invalid("ARMA coefficients must be finite"));
        }
        if !is_stationary(&self.ar) {
            return Err(invalid(format!("AR polynomial {:?} is not stationary", self.ar)));
        }
        let neg: Vec<f64> = self.ma.iter().map(|v| -v).collect();
        if !is_stationary(&neg) {
            return Err(invalid(format!("MA polynomial {:?} is not invertible", self.ma)));
        }
        Ok(())
    }

    /// Coefficients `c_0 = 1, c_1, …` of `φ(B) (1 - B)^d` with the fractional
    /// part truncated.
    pub fn ar_operator(&self) -> Vec<f64> {
        let w = frac_diff_weights(self.d, self.truncation + 1);
        let mut c = vec![0.0; w.len() + self.ar.len()];
        for (k, wk) in w.iter().enumerate() {
            c[k] += wk;
            for (i, phi) in self.ar.iter().enumerate() {
                c[k + i + 1] -= phi * wk;
            }
        }
        c
    }
}

/// Expansion weights of `(1 - B)^d`: `π_0 = 1`, `π_k = π_{k-1} (k - 1 - d) / k`.
pub fn frac_diff_weights(d: f64, n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n);
    if n == 0 {
        return w;
    }
    w.push(1.0);
    for k in 1..n {
        let prev = w[k - 1];
        w.push(prev * ((k - 1) as f64 - d) / k as f64);
    }
    w
}

/// Whether `1 - a_1 z - … - a_p z^p` has all roots outside the unit circle,
/// decided by the step-down (Schur-Cohn) recursion.
pub fn is_stationary(a: &[f64]) -> bool {
    coeffs_to_pacf(a).is_some()
}

/// Partial autocorrelations of a stationary AR polynomial, or `None` when
/// the polynomial is not stationary.
pub fn coeffs_to_pacf(a: &[f64]) -> Option<Vec<f64>> {
    let p = a.len();
    let mut cur = a.to_vec();
    let mut r = vec![0.0; p];
    for k in (1..=p).rev() {
        let rk = cur[k - 1];
        if !(rk.abs() < 1.0) {
            return None;
        }
        r[k - 1] = rk;
        let denom = 1.0 - rk * rk;
        let prev: Vec<f64> = (1..k)
            .map(|j| (cur[j - 1] + rk * cur[k - j - 1]) / denom)
            .collect();
        cur = prev;
    }
    Some(r)
}

/// Maps partial autocorrelations in `(-1, 1)` to the coefficients of a
/// stationary AR polynomial.
pub fn pacf_to_coeffs(r: &[f64]) -> Vec<f64> {
    let mut cur: Vec<f64> = Vec::with_capacity(r.len());
    for (k, &rk) in r.iter().enumerate() {
        let mut next: Vec<f64> = (0..k).map(|j| cur[j] - rk * cur[k - 1 - j]).collect();
        next.push(rk);
        cur = next;
    }
    cur
}

/// Applies the truncated `(1 - B)^d` to `x` (pre-sample zeros).
pub fn frac_diff(x: &[f64], d: f64, truncation: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let weights = frac_diff_weights(d, (truncation + 1).min(x.len().max(1)));
    if x.len() * weights.len() <= DIRECT_CONVOLUTION_LIMIT {
        convolve_direct(x, &weights, &mut out);
    } else {
        FftConvolver::new(x.len(), weights.len()).convolve(x, &weights, &mut out);
    }
    out
}

pub(crate) fn convolve_direct(x: &[f64], w: &[f64], out: &mut [f64]) {
    for (t, o) in out.iter_mut().enumerate() {
        let kmax = t.min(w.len() - 1);
        let mut acc = 0.0;
        for k in 0..=kmax {
            acc += w[k] * x[t - k];
        }
        *o = acc;
    }
}

/// Causal linear convolution `out_t = Σ_k w_k x_{t-k}` for fixed signal and
/// kernel lengths, reusing FFT plans and scratch space between calls.
pub struct FftConvolver {
    n: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    a: Vec<Complex<f64>>,
    b: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl std::fmt::Debug for FftConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftConvolver").field("n", &self.n).field("m", &self.m).finish()
    }
}

impl FftConvolver {
    pub fn new(n: usize, kernel_len: usize) -> Self {
        let m = (n + kernel_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            m,
            forward,
            inverse,
            a: vec![Complex::default(); m],
            b: vec![Complex::default(); m],
            scratch: vec![Complex::default(); scratch_len],
        }
    }

    pub fn convolve(&mut self, x: &[f64], w: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert!(w.len() + self.n <= self.m);
        // Pack signal and kernel into one complex transform: a = x + i w.
        for (k, slot) in self.a.iter_mut().enumerate() {
            let re = x.get(k).copied().unwrap_or(0.0);
            let im = w.get(k).copied().unwrap_or(0.0);
            *slot = Complex::new(re, im);
        }
        self.forward
            .process_with_scratch(&mut self.a, &mut self.scratch);
        let m = self.m;
        // X_k = (A_k + conj(A_{m-k})) / 2, W_k = (A_k - conj(A_{m-k})) / 2i
        for k in 0..m {
            let ak = self.a[k];
            let amk = self.a[(m - k) % m].conj();
            let xk = (ak + amk) * 0.5;
            let wk = (ak - amk) * Complex::new(0.0, -0.5);
            self.b[k] = xk * wk;
        }
        self.inverse
            .process_with_scratch(&mut self.b, &mut self.scratch);
        let scale = 1.0 / m as f64;
        for (o, v) in out.iter_mut().zip(&self.b) {
            *o = v.re * scale;
        }
    }
}

/// `Z_t = φ(B)(1 - B)^d ε_t - Σ θ_i Z_{t-i}` with zero pre-sample values.
pub fn filter_to_innovations(eps: &[f64], params: &ArfimaParams) -> Vec<f64> {
    if eps.len() <= params.truncation {
        log::debug!(
            "series of length {} is not longer than the truncation {}",
            eps.len(),
            params.truncation
        );
    }
    let y = frac_diff(eps, params.d, params.truncation);
    let mut z = vec![0.0; eps.len()];
    apply_arma(&y, &params.ar, &params.ma, &mut z);
    z
}

/// `z = θ(B)^{-1} φ(B) y` with zero pre-sample values.
pub(crate) fn apply_arma(y: &[f64], ar: &[f64], ma: &[f64], z: &mut [f64]) {
    for t in 0..y.len() {
        let mut x = y[t];
        for (i, phi) in ar.iter().enumerate() {
            if t > i {
                x -= phi * y[t - i - 1];
            }
        }
        for (i, theta) in ma.iter().enumerate() {
            if t > i {
                x -= theta * z[t - i - 1];
            }
        }
        z[t] = x;
    }
}

/// Inverse of [`filter_to_innovations`]: `ε = (1 - B)^{-d} φ(B)^{-1} θ(B) Z`,
/// where `(1 - B)^{-d}` is the exact inverse of the truncated differencing
/// operator, solved recursively.
pub fn inverse_filter(z: &[f64], params: &ArfimaParams) -> Vec<f64> {
    let n = z.len();
    let mut x = vec![0.0; n];
    for t in 0..n {
        let mut v = z[t];
        for (i, theta) in params.ma.iter().enumerate() {
            if t > i {
                v += theta * z[t - i - 1];
            }
        }
        x[t] = v;
    }
    let mut y = vec![0.0; n];
    for t in 0..n {
        let mut v = x[t];
        for (i, phi) in params.ar.iter().enumerate() {
            if t > i {
                v += phi * y[t - i - 1];
            }
        }
        y[t] = v;
    }
    let w = frac_diff_weights(params.d, params.truncation + 1);
    let mut eps = vec![0.0; n];
    for t in 0..n {
        let kmax = t.min(w.len() - 1);
        let mut v = y[t];
        for k in 1..=kmax {
            v -= w[k] * eps[t - k];
        }
        eps[t] = v;
    }
    eps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_basic() {
        let w = frac_diff_weights(0.0, 5);
        assert_eq!(w, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        for d in [-0.3, 0.1, 0.45] {
            let w = frac_diff_weights(d, 3);
            assert_eq!(w[1], -d);
        }
        let w = frac_diff_weights(0.4, 3);
        assert!((w[2] + 0.12).abs() < 1e-15);
    }

    #[test]
    fn identity_filter() {
        let eps = vec![0.3, -1.0, 2.5, 0.0, 4.0];
        let p = ArfimaParams::identity();
        assert_eq!(filter_to_innovations(&eps, &p), eps);
        assert_eq!(inverse_filter(&eps, &p), eps);
    }

    #[test]
    fn ar1_hand_recursion() {
        let p = ArfimaParams::new(0.0, vec![0.5], vec![], 10).unwrap();
        assert_eq!(filter_to_innovations(&[1.0, 1.0, 1.0], &p), vec![1.0, 0.5, 0.5]);
    }

    #[test]
    fn ma_impulse_response() {
        let p = ArfimaParams::new(0.0, vec![], vec![0.5], 10).unwrap();
        assert_eq!(inverse_filter(&[1.0, 0.0, 0.0, 0.0], &p), vec![1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn parameter_validation() {
        assert!(ArfimaParams::new(0.5, vec![], vec![], 10).is_err());
        assert!(ArfimaParams::new(-0.5, vec![], vec![], 10).is_err());
        assert!(ArfimaParams::new(0.2, vec![1.1], vec![], 10).is_err());
        assert!(ArfimaParams::new(0.2, vec![], vec![-1.0], 10).is_err());
        assert!(ArfimaParams::new(0.2, vec![], vec![], 0).is_err());
        assert!(ArfimaParams::new(0.431, vec![1.2334, -0.2698], vec![-0.8065], 1000).is_ok());
    }

    #[test]
    fn stationarity_by_roots() {
        // 1 - 1.5 z + 0.56 z^2 = (1 - 0.8 z)(1 - 0.7 z)
        assert!(is_stationary(&[1.5, -0.56]));
        // (1 - 1.1 z)(1 - 0.5 z)
        assert!(!is_stationary(&[1.6, -0.55]));
        assert!(is_stationary(&[]));
    }

    #[test]
    fn pacf_roundtrip() {
        let r = vec![0.9, -0.4, 0.25];
        let a = pacf_to_coeffs(&r);
        let back = coeffs_to_pacf(&a).unwrap();
        for (x, y) in r.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_matches_direct() {
        let x: Vec<f64> = (0..3000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let w = frac_diff_weights(0.37, 1001);
        let mut direct = vec![0.0; x.len()];
        convolve_direct(&x, &w, &mut direct);
        let mut fft = vec![0.0; x.len()];
        FftConvolver::new(x.len(), w.len()).convolve(&x, &w, &mut fft);
        for (a, b) in direct.iter().zip(&fft) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn ar_operator_matches_filter() {
        let p = ArfimaParams::new(0.3, vec![0.5, -0.2], vec![], 50).unwrap();
        let c = p.ar_operator();
        let eps: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
        let z = filter_to_innovations(&eps, &p);
        for t in 0..eps.len() {
            let v: f64 = (0..=t.min(c.len() - 1)).map(|k| c[k] * eps[t - k]).sum();
            assert!((v - z[t]).abs() < 1e-12);
        }
    }
}
