//! FFT periodogram, Daniell smoothing and peak-based period selection.
//!
//! Frequencies are in cycles per 10-minute step, so a period of `s` steps sits
//! at frequency `1/s`. The day is 144 steps and the year 52 560 steps.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{data, invalid, Result};

/// Default Daniell window length for [`smooth`].
pub const DEFAULT_BANDWIDTH: usize = 11;

/// Periods retained by default: year, half-year, day, half-day (in steps).
pub const DEFAULT_PERIODS: [f64; 4] = [52_560.0, 26_280.0, 144.0, 72.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodogram {
    /// Cycles per step, strictly increasing in `(0, 0.5]`.
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    /// Length of the input series (before zero padding).
    pub n: usize,
}

impl Periodogram {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Two-sided integral of the spectral estimate, `∫ I(ω) dω` over
    /// `(-π, π]` with bin width `2π/m`. For an unpadded series this equals
    /// the biased sample variance.
    pub fn total_power(&self) -> f64 {
        let m = 2 * self.len();
        let width = 2.0 * std::f64::consts::PI / m as f64;
        let (last, body) = self.power.split_last().expect("non-empty periodogram");
        (2.0 * body.iter().sum::<f64>() + last) * width
    }

    /// Writes `frequency,power` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency,power\n");
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            out.push_str(&format!("{f},{p}\n"));
        }
        out
    }
}

/// Selected periods, strictly decreasing, in steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSet {
    pub periods: Vec<f64>,
}

impl PeriodSet {
    pub fn new(mut periods: Vec<f64>) -> Result<Self> {
        if periods.iter().any(|p| !(*p > 1.0)) {
            return Err(invalid("periods must exceed one step"));
        }
        periods.sort_by(|a, b| b.total_cmp(a));
        if periods.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("periods must be distinct"));
        }
        Ok(Self { periods })
    }

    pub fn default_periods() -> Self {
        Self::new(DEFAULT_PERIODS.to_vec()).expect("static periods are valid")
    }
}

/// Raw periodogram `I(ω_k) = |DFT_k|² / (2πn)` of the mean-removed series.
///
/// Lengths that are not a power of two are zero-padded to the next power of
/// two `m`; the frequencies are then `k/m`, `k = 1..=m/2`, and the power is
/// still normalised by the true length `n`.
pub fn periodogram(series: &[f64]) -> Result<Periodogram> {
    let n = series.len();
    if n < 16 {
        return Err(data(format!("periodogram needs at least 16 points, got {n}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(data("periodogram input contains non-finite values"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 1e-28 * mean * mean || var == 0.0 {
        return Err(data("constant series has no spectrum (zero variance)"));
    }
    let m = n.next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(m)
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let norm = 2.0 * std::f64::consts::PI * n as f64;
    let half = m / 2;
    let frequencies = (1..=half).map(|k| k as f64 / m as f64).collect();
    let power = buf[1..=half].iter().map(|c| c.norm_sqr() / norm).collect();
    Ok(Periodogram {
        frequencies,
        power,
        n,
    })
}

/// Daniell (moving-average) smoothing with an odd window. Near the edges the
/// window is truncated and renormalised, so constant spectra are unchanged.
pub fn smooth(pg: &Periodogram, bandwidth: usize) -> Result<Periodogram> {
    if bandwidth == 0 || bandwidth % 2 == 0 {
        return Err(invalid(format!("bandwidth must be odd and positive, got {bandwidth}")));
    }
    if bandwidth >= pg.len() {
        return Err(invalid(format!(
            "bandwidth {bandwidth} must be smaller than the number of frequencies {}",
            pg.len()
        )));
    }
    let half = bandwidth / 2;
    let len = pg.len();
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for p in &pg.power {
        acc += p;
        prefix.push(acc);
    }
    let power = (0..len)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(len);
            if hi - lo == bandwidth {
                // interior: plain sum keeps the mass bit-stable
                pg.power[lo..hi].iter().sum::<f64>() / bandwidth as f64
            } else {
                ((prefix[hi] - prefix[lo]) / (hi - lo) as f64).max(0.0)
            }
        })
        .collect();
    Ok(Periodogram {
        frequencies: pg.frequencies.clone(),
        power,
        n: pg.n,
    })
}

/// Local maxima of the spectrum with period at most `max_period`, strongest
/// first, truncated to `top_k`.
pub fn detect_peaks(pg: &Periodogram, max_period: f64, top_k: usize) -> Result<PeriodSet> {
    if top_k == 0 {
        return Err(invalid("top_k must be at least 1"));
    }
    let p = &pg.power;
    let mut peaks: Vec<(f64, f64)> = (0..p.len())
        .filter(|&i| {
            let left = i == 0 || p[i] > p[i - 1];
            let right = i + 1 == p.len() || p[i] >= p[i + 1];
            left && right && p[i] > 0.0
        })
        .map(|i| (1.0 / pg.frequencies[i], p[i]))
        .filter(|(period, _)| *period <= max_period && *period > 1.0)
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.total_cmp(&a.0)));
    peaks.truncate(top_k);
    // Kept in power order; PeriodSet::new would re-sort by period.
    Ok(PeriodSet {
        periods: peaks.into_iter().map(|(period, _)| period).collect(),
    })
}
