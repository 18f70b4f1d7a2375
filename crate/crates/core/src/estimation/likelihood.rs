//! Conditional skew-t quasi log-likelihood of the full model.

use crate::aparch::{presample_level, scale_recursion, AparchParams, SkewT};
use crate::arfima::{apply_arma, convolve_direct, frac_diff_weights, FftConvolver, DIRECT_CONVOLUTION_LIMIT};
use crate::ingestion::WindSeries;
use crate::seasonal::{SeasonalColumns, SeasonalSpec};

use super::params::{Layout, ModelParams};

/// Negative log-likelihood `-Σ_t [log f(Z_t/σ_t) - log σ_t]` of `series`
/// (time index 0 at its first value). Inadmissible parameters give `+∞`.
pub fn qml_negloglik(series: &WindSeries, params: &ModelParams, spec: &SeasonalSpec) -> f64 {
    if params.validate(spec).is_err() || series.values.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let Ok(spec) = params.seasonal_spec(spec) else {
        return f64::INFINITY;
    };
    Likelihood::new(&series.values, &spec).negloglik(params)
}

/// Intermediate sequences of one likelihood evaluation.
#[derive(Debug, Clone)]
pub struct Paths {
    /// Regression residuals `ε_t`.
    pub residuals: Vec<f64>,
    /// Innovations `Z_t`.
    pub innovations: Vec<f64>,
    /// Conditional scale `σ_t`.
    pub sigma: Vec<f64>,
    /// Standardised residuals `η_t = Z_t / σ_t`.
    pub eta: Vec<f64>,
    /// Pre-sample level of the scale recursion.
    pub presample: f64,
}

/// Reusable evaluator. Each stage (mean, fractional difference, ARMA,
/// scale) is recomputed only when its inputs changed since the last call,
/// which makes coordinate-wise finite differences cheap for the scale
/// and distribution parameters.
pub struct Likelihood<'a> {
    w: &'a [f64],
    columns: SeasonalColumns,
    convolver: Option<FftConvolver>,
    truncation: usize,
    mean: Vec<f64>,
    eps: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    sigd: Vec<f64>,
    key_mean: Vec<f64>,
    key_d: Option<f64>,
    key_arma: Vec<f64>,
    floor: f64,
}

impl<'a> Likelihood<'a> {
    pub fn new(w: &'a [f64], spec: &SeasonalSpec) -> Self {
        let n = w.len();
        Self {
            w,
            columns: SeasonalColumns::new(spec, 0..n),
            convolver: None,
            truncation: 0,
            mean: vec![0.0; n],
            eps: vec![0.0; n],
            y: vec![0.0; n],
            z: vec![0.0; n],
            sigd: vec![0.0; n],
            key_mean: Vec::new(),
            key_d: None,
            key_arma: Vec::new(),
            floor: 0.0,
        }
    }

    /// Scores every observation with scale `(σ_t⁴ + floor⁴)^¼` instead of
    /// `σ_t`. Exact ties in the data (calm spells recorded as zero) let
    /// the plain likelihood grow without bound as the scale collapses on
    /// them; a floor well below the typical scale removes that direction
    /// while leaving scales a few times above it practically unchanged.
    pub fn with_scale_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    fn update_mean(&mut self, params: &ModelParams) {
        let same = self.key_mean.len() == params.theta.len() + params.p_exponents.len()
            && self
                .key_mean
                .iter()
                .zip(params.theta.iter().chain(&params.p_exponents))
                .all(|(a, b)| a == b);
        if same {
            return;
        }
        self.columns.update(&params.p_exponents);
        self.columns.mean_into(&params.theta, &mut self.mean);
        for ((e, w), m) in self.eps.iter_mut().zip(self.w).zip(&self.mean) {
            *e = w - m;
        }
        self.key_mean.clear();
        self.key_mean.extend(params.theta.iter().chain(&params.p_exponents));
        self.key_d = None;
        self.key_arma.clear();
    }

    fn update_frac(&mut self, d: f64, truncation: usize) {
        if self.key_d == Some(d) && self.truncation == truncation {
            return;
        }
        let n = self.w.len();
        let weights = frac_diff_weights(d, (truncation + 1).min(n.max(1)));
        if n * weights.len() <= DIRECT_CONVOLUTION_LIMIT {
            convolve_direct(&self.eps, &weights, &mut self.y);
        } else {
            if self.truncation != truncation || self.convolver.is_none() {
                self.convolver = Some(FftConvolver::new(n, weights.len()));
            }
            self.convolver
                .as_mut()
                .expect("convolver just created")
                .convolve(&self.eps, &weights, &mut self.y);
        }
        self.truncation = truncation;
        self.key_d = Some(d);
        self.key_arma.clear();
    }

    fn update_arma(&mut self, ar: &[f64], ma: &[f64]) {
        let same = self.key_arma.len() == ar.len() + ma.len() + 1
            && self.key_arma[0] == ar.len() as f64
            && self.key_arma[1..].iter().zip(ar.iter().chain(ma)).all(|(a, b)| a == b);
        if same {
            return;
        }
        apply_arma(&self.y, ar, ma, &mut self.z);
        self.key_arma.clear();
        self.key_arma.push(ar.len() as f64);
        self.key_arma.extend(ar.iter().chain(ma));
    }

    fn filtered(&mut self, params: &ModelParams) {
        self.update_mean(params);
        self.update_frac(params.arfima.d, params.arfima.truncation);
        self.update_arma(&params.arfima.ar, &params.arfima.ma);
    }

    /// Sum of negative log-densities, `+∞` when the scale path breaks down.
    pub fn negloglik(&mut self, params: &ModelParams) -> f64 {
        let Ok(dist) = SkewT::new(params.skewt) else {
            return f64::INFINITY;
        };
        if params.aparch.validate().is_err() {
            return f64::INFINITY;
        }
        self.filtered(params);
        let ap: &AparchParams = &params.aparch;
        let init = presample_level(&self.z, ap);
        if !(init.is_finite() && init >= 0.0) {
            return f64::INFINITY;
        }
        scale_recursion(&self.z, ap, init, &mut self.sigd);
        let inv_delta = 1.0 / ap.delta;
        let mut total = 0.0;
        for (&z, &s) in self.z.iter().zip(&self.sigd) {
            if !(s > 0.0 && s.is_finite()) {
                return f64::INFINITY;
            }
            let mut log_sigma = s.ln() * inv_delta;
            if self.floor > 0.0 {
                log_sigma = 0.25 * ((4.0 * log_sigma).exp() + self.floor.powi(4)).ln();
            }
            let eta = z * (-log_sigma).exp();
            total += dist.logpdf(eta) - log_sigma;
        }
        if total.is_finite() {
            -total
        } else {
            f64::INFINITY
        }
    }

    /// Mean negative log-likelihood at the unconstrained point `u`.
    pub fn mean_objective(&mut self, layout: &Layout, u: &[f64]) -> f64 {
        match layout.decode(u) {
            Ok(p) => self.negloglik(&p) / self.w.len() as f64,
            Err(_) => f64::INFINITY,
        }
    }

    /// Innovations only (the mean, fractional and ARMA stages).
    pub fn innovations(&mut self, params: &ModelParams) -> Vec<f64> {
        self.filtered(params);
        self.z.clone()
    }

    pub fn paths(&mut self, params: &ModelParams) -> Paths {
        self.negloglik(params);
        let presample = presample_level(&self.z, &params.aparch);
        let sigma: Vec<f64> = self.sigd.iter().map(|s| s.powf(1.0 / params.aparch.delta)).collect();
        let eta = self.z.iter().zip(&sigma).map(|(z, s)| z / s).collect();
        Paths {
            residuals: self.eps.clone(),
            innovations: self.z.clone(),
            sigma,
            eta,
            presample,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aparch::SkewTParams;
    use crate::arfima::ArfimaParams;

    fn spec() -> SeasonalSpec {
        SeasonalSpec::new(288.0, 24.0, vec![vec![0, 1], vec![1, 1]], true, 1000.0).unwrap()
    }

    fn params(spec: &SeasonalSpec) -> ModelParams {
        ModelParams {
            theta: vec![4.0, -0.3, 0.5, 0.2, 0.1],
            p_exponents: spec.p_vector(),
            arfima: ArfimaParams::new(0.2, vec![0.4], vec![-0.3], 50).unwrap(),
            aparch: AparchParams::new(0.05, vec![0.1], vec![0.8], vec![-0.1], 1.2).unwrap(),
            skewt: SkewTParams::new(1.05, 8.0).unwrap(),
        }
    }

    #[test]
    fn cached_matches_fresh() {
        let spec = spec();
        let w: Vec<f64> = (0..800).map(|i| 4.0 + ((i * 7919) % 97) as f64 / 40.0).collect();
        let p = params(&spec);
        let mut lik = Likelihood::new(&w, &spec);
        let a = lik.negloglik(&p);
        let mut q = p.clone();
        q.aparch.delta = 1.3;
        let b = lik.negloglik(&q);
        let c = lik.negloglik(&p);
        assert_eq!(a, c);
        assert_eq!(b, Likelihood::new(&w, &spec).negloglik(&q));
        let mut r = p.clone();
        r.arfima.d = 0.1;
        lik.negloglik(&r);
        assert_eq!(lik.negloglik(&p), a);
    }

    #[test]
    fn scale_floor_bounds_the_likelihood() {
        let spec = spec();
        let mut w: Vec<f64> = (0..800).map(|i| 4.0 + ((i * 7919) % 97) as f64 / 40.0).collect();
        w.extend(std::iter::repeat(0.0).take(200));
        let p = params(&spec);
        let plain = Likelihood::new(&w, &spec).negloglik(&p);
        let tiny = Likelihood::new(&w, &spec).with_scale_floor(1e-4).negloglik(&p);
        assert!((tiny - plain).abs() < 1e-9 * plain.abs(), "{tiny} vs {plain}");

        // every term is at least ln(floor) - ln(max density)
        let mut q = p.clone();
        q.aparch.alpha0 = 1e-12;
        let floor = 0.05;
        let dist = SkewT::new(q.skewt).unwrap();
        let top = (-4000..4000).map(|i| dist.logpdf(i as f64 * 1e-3)).fold(f64::MIN, f64::max);
        let nll = Likelihood::new(&w, &spec).with_scale_floor(floor).negloglik(&q);
        assert!(nll >= w.len() as f64 * (floor.ln() - top) - 1e-6, "{nll}");
    }

    #[test]
    fn invalid_params_reject() {
        let spec = spec();
        let series = WindSeries::new(chrono::DateTime::UNIX_EPOCH, vec![4.0; 100]).unwrap();
        let mut p = params(&spec);
        p.skewt.nu = 1.5;
        assert_eq!(qml_negloglik(&series, &p, &spec), f64::INFINITY);
    }
}
