//! Residual checks: autocorrelations, Ljung-Box tests, histogram against
//! the fitted skew-t density, in-sample MSE and R².

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::aparch::SkewT;
use crate::error::{data, invalid, Result};
use crate::estimation::FitResult;
use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfResult {
    /// `0..=max_lag`
    pub lags: Vec<usize>,
    pub acf: Vec<f64>,
    /// Half-width of the approximate 95 % band under independence.
    pub confidence_band: f64,
}

impl AcfResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,acf,band\n");
        for (k, r) in self.lags.iter().zip(&self.acf) {
            writeln!(out, "{k},{r},{}", self.confidence_band).expect("string write");
        }
        out
    }
}

/// Sample autocorrelations with the `1/n` denominator.
pub fn acf(x: &[f64], max_lag: usize) -> Result<AcfResult> {
    let n = x.len();
    if max_lag >= n {
        return Err(invalid(format!("max lag {max_lag} must be below the length {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(data("autocorrelation of a sequence with missing values"));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if !(c0 > 1e-300) || c0 <= 1e-28 * mean * mean * n as f64 {
        return Err(data("autocorrelation of a constant sequence"));
    }
    let acf = (0..=max_lag)
        .map(|k| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect();
    Ok(AcfResult {
        lags: (0..=max_lag).collect(),
        acf,
        confidence_band: 1.96 / (n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub lags: usize,
    pub q: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `Q = n(n+2) Σ ρ̂_k² / (n-k)` over `k = 1..=lags`, referred to χ² with
/// `lags - fitted_params` degrees of freedom.
pub fn ljung_box(x: &[f64], lags: usize, fitted_params: usize) -> Result<LjungBox> {
    if lags <= fitted_params {
        return Err(invalid(format!(
            "{lags} lags leave no degrees of freedom after {fitted_params} fitted parameters"
        )));
    }
    let r = acf(x, lags)?;
    let n = x.len() as f64;
    let q = n * (n + 2.0)
        * r.acf[1..]
            .iter()
            .enumerate()
            .map(|(i, rho)| rho * rho / (n - (i + 1) as f64))
            .sum::<f64>();
    let df = lags - fitted_params;
    let chi = ChiSquared::new(df as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(LjungBox {
        lags,
        q,
        df,
        p_value: chi.sf(q),
    })
}

/// Tests at several lag counts, e.g. the 5, 10, 15, 20 of a residual table.
pub fn ljung_box_table(x: &[f64], lags: &[usize], fitted_params: usize) -> Result<Vec<LjungBox>> {
    lags.iter().map(|&m| ljung_box(x, m, fitted_params)).collect()
}

pub fn ljung_box_csv(rows: &[LjungBox]) -> String {
    let mut out = String::from("lags,q,df,p_value\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.lags, r.q, r.df, r.p_value).expect("string write");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Counts scaled to unit area.
    pub density: Vec<f64>,
    /// Fitted density at the bin centres.
    pub fitted: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper,count,density,fitted\n");
        for i in 0..self.counts.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.density[i],
                self.fitted[i]
            )
            .expect("string write");
        }
        out
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Freedman-Diaconis binning: width `2 IQR n^{-1/3}`, capped at 1000 bins.
pub fn histogram(x: &[f64], density: &SkewT) -> Result<Histogram> {
    if x.len() < 2 || x.iter().any(|v| !v.is_finite()) {
        return Err(data("histogram needs at least two finite values"));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let n = x.len() as f64;
    let width = 2.0 * iqr / n.cbrt();
    let bins = if width > 0.0 && hi > lo {
        (((hi - lo) / width).ceil() as usize).clamp(1, 1000)
    } else {
        1
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let w = span / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for v in x {
        let i = (((v - lo) / w) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let dens = counts.iter().map(|c| *c as f64 / (n * w)).collect();
    let fitted = edges.windows(2).map(|e| density.pdf(0.5 * (e[0] + e[1]))).collect();
    Ok(Histogram {
        edges,
        counts,
        density: dens,
        fitted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    /// Cells after merging, less one, less the two shape parameters.
    pub df: usize,
    pub p_value: f64,
}

/// Pearson χ² of histogram counts against the fitted density. Outer bins
/// extend to ±∞ and adjacent bins are merged until every expected count is
/// at least 5.
pub fn chi_square_gof(hist: &Histogram, density: &SkewT) -> Result<GoodnessOfFit> {
    let n: usize = hist.counts.iter().sum();
    let bins = hist.counts.len();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    let mode = density.mode();
    for i in 0..bins {
        let (a, b) = (hist.edges[i], hist.edges[i + 1]);
        let pdf = |x: f64| density.pdf(x);
        let p = if bins == 1 {
            1.0
        } else if i == 0 {
            quad::integrate_lower(pdf, b, 1e-12, 1e-10)
        } else if i == bins - 1 {
            quad::integrate_upper(pdf, a, 1e-12, 1e-10)
        } else if a < mode && mode < b {
            quad::integrate(pdf, a, mode, 1e-12, 1e-10) + quad::integrate(pdf, mode, b, 1e-12, 1e-10)
        } else {
            quad::integrate(pdf, a, b, 1e-12, 1e-10)
        };
        obs += hist.counts[i] as f64;
        exp += p * n as f64;
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if obs > 0.0 || exp > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => cells.push((obs, exp)),
        }
    }
    if cells.len() < 4 {
        return Err(data(format!("{} cells after merging leave no degrees of freedom", cells.len())));
    }
    let statistic = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = cells.len() - 3;
    let chi = ChiSquared::new(df as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(GoodnessOfFit {
        statistic,
        df,
        p_value: chi.sf(statistic),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    /// Mean squared one-step error.
    pub mse: f64,
    /// `1 - MSE / var(W)`
    pub r_squared: f64,
    pub histogram: Histogram,
    pub goodness_of_fit: Option<GoodnessOfFit>,
}

/// In-sample fit quality of a fitted model. Needs the residual paths, so
/// it works on a result straight from fitting (they are not serialised).
pub fn residual_summary(fit: &FitResult) -> Result<ResidualSummary> {
    if fit.eta.is_empty() {
        return Err(data("fit carries no residual paths; refit or evaluate the model on its series"));
    }
    let r_squared = if fit.variance > 0.0 {
        1.0 - fit.mse / fit.variance
    } else {
        1.0
    };
    let density = SkewT::new(fit.params.skewt)?;
    let histogram = histogram(&fit.eta, &density)?;
    let goodness_of_fit = if fit.mse > 0.0 {
        chi_square_gof(&histogram, &density).ok()
    } else {
        None
    };
    Ok(ResidualSummary {
        mse: fit.mse,
        r_squared,
        histogram,
        goodness_of_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aparch::SkewTParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn acf_basics() {
        let x = noise(500, 1);
        let r = acf(&x, 20).unwrap();
        assert_eq!(r.acf[0], 1.0);
        assert!(r.acf.iter().all(|v| v.abs() <= 1.0));
        assert!(acf(&[2.0; 10], 3).is_err());
        assert!(acf(&x, 500).is_err());
    }

    #[test]
    fn acf_of_reversal() {
        let x = noise(300, 2);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        let (a, b) = (acf(&x, 10).unwrap(), acf(&rev, 10).unwrap());
        for (p, q) in a.acf.iter().zip(&b.acf) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn ljung_box_scale_invariance_and_power() {
        let x = noise(2000, 3);
        let y: Vec<f64> = x.iter().map(|v| 37.0 * v).collect();
        let (a, b) = (ljung_box(&x, 10, 0).unwrap(), ljung_box(&y, 10, 0).unwrap());
        assert!((a.q - b.q).abs() < 1e-9 * a.q);
        let mut ar = vec![0.0; 2000];
        for t in 1..2000 {
            ar[t] = 0.9 * ar[t - 1] + x[t];
        }
        assert!(ljung_box(&ar, 10, 0).unwrap().p_value < 1e-6);
        assert!(ljung_box(&x, 3, 3).is_err());
    }

    #[test]
    fn ljung_box_null_limit() {
        // period-4 pattern 1, 1, -1, -1 has no lag-1 correlation
        let x: Vec<f64> = (0..4000).map(|i| if i % 4 < 2 { 1.0 } else { -1.0 }).collect();
        let lb = ljung_box(&x, 1, 0).unwrap();
        assert!(lb.q < 1e-3, "{}", lb.q);
        assert!(lb.p_value > 0.97);
    }

    #[test]
    fn histogram_area_is_one() {
        let dens = SkewT::new(SkewTParams::new(1.05, 8.0).unwrap()).unwrap();
        let x = noise(5000, 4);
        let h = histogram(&x, &dens).unwrap();
        let w = h.edges[1] - h.edges[0];
        assert!((h.density.iter().sum::<f64>() * w - 1.0).abs() < 1e-12);
        assert_eq!(h.counts.iter().sum::<usize>(), 5000);
    }

    #[test]
    fn gof_accepts_own_samples() {
        let params = SkewTParams::new(1.06, 7.5).unwrap();
        let dens = SkewT::new(params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = dens.sample(&mut rng, 20_000);
        let h = histogram(&x, &dens).unwrap();
        assert!(chi_square_gof(&h, &dens).unwrap().p_value > 0.001);
        let wrong = SkewT::new(SkewTParams::new(0.8, 3.0).unwrap()).unwrap();
        assert!(chi_square_gof(&h, &wrong).unwrap().p_value < 1e-6);
    }
}
