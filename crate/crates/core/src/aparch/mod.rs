//! Asymmetric power ARCH scale recursion
//!
//! ```text
//! σ_t^δ = α_0 + Σ_l α_l (|Z_{t-l}| - γ_l Z_{t-l})^δ + Σ_m β_m σ_{t-m}^δ,   Z_t = σ_t η_t
//! ```
//!
//! with skewed Student-t innovations `η_t` (see [`skewt`]).

pub mod skewt;

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{data, invalid, Error, Result};
use crate::quad;
pub use skewt::{skew_t_logpdf, skew_t_sample, standardize, SkewT, SkewTParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AparchParams {
    pub alpha0: f64,
    /// `α_1 … α_Q`
    pub alpha: Vec<f64>,
    /// `β_1 … β_P`
    pub beta: Vec<f64>,
    /// `γ_1 … γ_Q`
    pub gamma: Vec<f64>,
    pub delta: f64,
}

impl AparchParams {
    pub fn new(alpha0: f64, alpha: Vec<f64>, beta: Vec<f64>, gamma: Vec<f64>, delta: f64) -> Result<Self> {
        let p = Self {
            alpha0,
            alpha,
            beta,
            gamma,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(invalid(format!("alpha0 = {} must be positive", self.alpha0)));
        }
        if self.alpha.len() != self.gamma.len() {
            return Err(invalid(format!(
                "{} alpha coefficients but {} gamma coefficients",
                self.alpha.len(),
                self.gamma.len()
            )));
        }
        if self.alpha.iter().chain(&self.beta).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("alpha and beta coefficients must be non-negative"));
        }
        if self.gamma.iter().any(|g| !(g.abs() < 1.0)) {
            return Err(invalid("gamma coefficients must lie in (-1, 1)"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid(format!("delta = {} must be positive", self.delta)));
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// `Σ α_l κ(γ_l) + Σ β_m`; the scale process is stationary when this is
    /// below one.
    pub fn persistence(&self, innovations: &SkewTParams) -> Result<f64> {
        let mut total: f64 = self.beta.iter().sum();
        for (a, g) in self.alpha.iter().zip(&self.gamma) {
            total += a * asym_power_moment(*g, self.delta, innovations)?;
        }
        Ok(total)
    }
}

/// Pre-sample level: the mean of `(|Z_t| - γ_1 Z_t)^δ` over the input.
pub fn presample_level(z: &[f64], params: &AparchParams) -> f64 {
    let g = params.gamma.first().copied().unwrap_or(0.0);
    let sum: f64 = z.iter().map(|v| (v.abs() - g * v).powf(params.delta)).sum();
    sum / z.len() as f64
}

/// `σ_t^δ` for every `t`, pre-sample terms initialised to
/// [`presample_level`].
pub fn aparch_scale_path(z: &[f64], params: &AparchParams) -> Result<Vec<f64>> {
    params.validate()?;
    if z.is_empty() {
        return Err(data("innovation sequence is empty"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(data("innovation sequence contains non-finite values"));
    }
    let init = presample_level(z, params);
    let mut out = vec![0.0; z.len()];
    scale_recursion(z, params, init, &mut out);
    Ok(out)
}

/// Recursion core with an explicit pre-sample level; `out` receives `σ_t^δ`.
pub(crate) fn scale_recursion(z: &[f64], params: &AparchParams, init: f64, out: &mut [f64]) {
    let delta = params.delta;
    let q = params.alpha.len();
    // (|Z| - γ_l Z)^δ evaluated lazily per lag
    let shock = |v: f64, g: f64| (v.abs() - g * v).powf(delta);
    let single_gamma = q == 1;
    let mut last_shock = init;
    for t in 0..z.len() {
        let mut s = params.alpha0;
        if single_gamma {
            s += params.alpha[0] * if t >= 1 { last_shock } else { init };
        } else {
            for l in 0..q {
                let term = if t > l {
                    shock(z[t - l - 1], params.gamma[l])
                } else {
                    init
                };
                s += params.alpha[l] * term;
            }
        }
        for (m, b) in params.beta.iter().enumerate() {
            let prev = if t > m { out[t - m - 1] } else { init };
            s += b * prev;
        }
        out[t] = s;
        if single_gamma {
            last_shock = shock(z[t], params.gamma[0]);
        }
    }
}

type MomentKey = [u64; 4];

fn moment_cache() -> &'static RwLock<HashMap<MomentKey, f64>> {
    static CACHE: OnceLock<RwLock<HashMap<MomentKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// `κ = E[(|η| - γη)^δ]` under the standardised skew-t law, by adaptive
/// quadrature split at zero and at the density peak. Results are cached.
pub fn asym_power_moment(gamma: f64, delta: f64, params: &SkewTParams) -> Result<f64> {
    if !(gamma.abs() < 1.0) {
        return Err(invalid(format!("gamma = {gamma} must lie in (-1, 1)")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("delta = {delta} must be positive")));
    }
    let dist = SkewT::new(*params)?;
    if delta >= params.nu {
        return Err(Error::MomentDoesNotExist {
            delta,
            nu: params.nu,
        });
    }
    let key = [gamma.to_bits(), delta.to_bits(), params.xi.to_bits(), params.nu.to_bits()];
    if let Some(v) = moment_cache().read().ok().and_then(|c| c.get(&key).copied()) {
        return Ok(v);
    }
    let value = quad::integrate_real_line(
        |x| (x.abs() - gamma * x).powf(delta) * dist.pdf(x),
        &[0.0, dist.mode()],
        1e-13,
        1e-11,
    );
    if let Ok(mut c) = moment_cache().write() {
        c.insert(key, value);
    }
    Ok(value)
}
