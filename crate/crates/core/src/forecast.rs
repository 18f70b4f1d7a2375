//! Multi-step conditional mean and scale forecasts from a fitted model, and
//! the persistence benchmark.
//!
//! The residual forecast runs the truncated AR(∞) form of the ARFIMA filter
//! forward with future innovations set to zero:
//!
//! ```text
//! ε̂_{κ+u} = -Σ_{k≥1} c_k ε̃_{κ+u-k} + Σ_{i≥u} θ_i Z_{κ+u-i}
//! ```
//!
//! where `c` are the coefficients of `φ(B)(1 - B)^d` and `ε̃` is observed up
//! to `κ` and forecast afterwards. At `u = 1` this is exactly the in-sample
//! one-step predictor.

use serde::{Deserialize, Serialize};

use crate::aparch::{asym_power_moment, scale_recursion};
use crate::arfima::filter_to_innovations;
use crate::error::{data, invalid, Result};
use crate::estimation::FitResult;
use crate::ingestion::WindSeries;
use crate::seasonal::SeasonalColumns;

/// Longest horizon accepted by default (one day).
pub const DEFAULT_MAX_HORIZON: usize = 144;

/// Trailing information window available at each origin.
pub const DEFAULT_WINDOW: usize = 220_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPath {
    pub origin: usize,
    pub horizon: usize,
    /// `Ŵ_{κ+1|κ} … Ŵ_{κ+h|κ}`
    pub mean: Vec<f64>,
    /// `E[σ^δ_{κ+u} | κ]`
    pub scale_delta: Vec<f64>,
}

impl ForecastPath {
    /// `step,mean,scale` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean,scale\n");
        for (u, (m, s)) in self.mean.iter().zip(&self.scale_delta).enumerate() {
            out.push_str(&format!("{},{m},{s}\n", u + 1));
        }
        out
    }
}

/// Filtered quantities from `start` up to the end of the history.
#[derive(Debug, Clone)]
struct State {
    start: usize,
    eps: Vec<f64>,
    z: Vec<f64>,
    sigd: Vec<f64>,
}

/// Forecasts from one fitted model over one history. Residuals,
/// innovations and scales are computed once for the whole history; origins
/// further in than the information window get a private, windowed state.
#[derive(Debug, Clone)]
pub struct Forecaster<'a> {
    fit: &'a FitResult,
    history: &'a WindSeries,
    window: usize,
    max_horizon: usize,
    ar_op: Vec<f64>,
    kappa: Vec<f64>,
    mean_curve: Vec<f64>,
    global: State,
}

impl<'a> Forecaster<'a> {
    pub fn new(fit: &'a FitResult, history: &'a WindSeries) -> Result<Self> {
        Self::with_limits(fit, history, DEFAULT_WINDOW, DEFAULT_MAX_HORIZON)
    }

    pub fn with_limits(fit: &'a FitResult, history: &'a WindSeries, window: usize, max_horizon: usize) -> Result<Self> {
        if history.values.iter().any(|v| !v.is_finite()) {
            return Err(data("history contains missing values"));
        }
        if window == 0 || max_horizon == 0 {
            return Err(invalid("window and maximum horizon must be positive"));
        }
        let ap = &fit.params.aparch;
        let kappa = ap
            .gamma
            .iter()
            .map(|g| asym_power_moment(*g, ap.delta, &fit.params.skewt))
            .collect::<Result<Vec<_>>>()?;
        let n = history.len();
        let mut mean_curve = vec![0.0; n + max_horizon];
        SeasonalColumns::new(&fit.spec, 0..n + max_horizon).mean_into(&fit.params.theta, &mut mean_curve);
        let mut me = Self {
            fit,
            history,
            window,
            max_horizon,
            ar_op: fit.params.arfima.ar_operator(),
            kappa,
            mean_curve,
            global: State {
                start: 0,
                eps: Vec::new(),
                z: Vec::new(),
                sigd: Vec::new(),
            },
        };
        let upto = n.min(window);
        me.global = me.state(0, upto);
        Ok(me)
    }

    fn state(&self, start: usize, end: usize) -> State {
        let eps: Vec<f64> = (start..end)
            .map(|t| self.history.values[t] - self.mean_curve[t])
            .collect();
        let z = filter_to_innovations(&eps, &self.fit.params.arfima);
        let mut sigd = vec![0.0; z.len()];
        scale_recursion(&z, &self.fit.params.aparch, self.fit.presample, &mut sigd);
        State { start, eps, z, sigd }
    }

    fn state_for(&self, origin: usize) -> std::borrow::Cow<'_, State> {
        let start = (origin + 1).saturating_sub(self.window);
        if start == 0 {
            std::borrow::Cow::Borrowed(&self.global)
        } else {
            std::borrow::Cow::Owned(self.state(start, origin + 1))
        }
    }

    fn check(&self, origin: usize, horizon: usize) -> Result<()> {
        if origin >= self.history.len() {
            return Err(invalid(format!("origin {origin} is outside the history of length {}", self.history.len())));
        }
        if horizon == 0 || horizon > self.max_horizon {
            return Err(invalid(format!("horizon {horizon} must lie in 1..={}", self.max_horizon)));
        }
        Ok(())
    }

    /// Deterministic mean (trend and seasonal terms) at time `t`.
    pub fn seasonal_mean(&self, t: usize) -> f64 {
        self.mean_curve[t]
    }

    /// Residual forecasts `ε̂_{κ+1} … ε̂_{κ+h}`.
    pub fn residual_forecast(&self, origin: usize, horizon: usize) -> Result<Vec<f64>> {
        self.check(origin, horizon)?;
        let st = self.state_for(origin);
        let last = origin - st.start;
        let ma = &self.fit.params.arfima.ma;
        let c = &self.ar_op;
        let mut ext = st.eps[..=last].to_vec();
        let mut out = Vec::with_capacity(horizon);
        for u in 1..=horizon {
            let pos = last + u;
            let mut v = 0.0;
            for (k, ck) in c.iter().enumerate().skip(1) {
                if k > pos {
                    break;
                }
                v -= ck * ext[pos - k];
            }
            for i in u..=ma.len() {
                if i <= pos {
                    v += ma[i - 1] * st.z[pos - i];
                }
            }
            ext.push(v);
            out.push(v);
        }
        Ok(out)
    }

    /// `Ŵ_{κ+u|κ}` for `u = 1..=h`.
    pub fn mean(&self, origin: usize, horizon: usize) -> Result<Vec<f64>> {
        let eps = self.residual_forecast(origin, horizon)?;
        Ok(eps
            .iter()
            .enumerate()
            .map(|(u, e)| self.mean_curve[origin + u + 1] + e)
            .collect())
    }

    /// `E[σ^δ_{κ+u} | κ]` for `u = 1..=h`.
    pub fn scale(&self, origin: usize, horizon: usize) -> Result<Vec<f64>> {
        self.check(origin, horizon)?;
        let st = self.state_for(origin);
        let ap = &self.fit.params.aparch;
        let last = origin - st.start;
        let init = self.fit.presample;
        let obs_shock = |idx: isize, g: f64| -> f64 {
            if idx < 0 {
                init
            } else {
                let v = st.z[idx as usize];
                (v.abs() - g * v).powf(ap.delta)
            }
        };
        let obs_sigd = |idx: isize| if idx < 0 { init } else { st.sigd[idx as usize] };
        let mut fc: Vec<f64> = Vec::with_capacity(horizon);
        for u in 1..=horizon {
            let pos = (last + u) as isize;
            let mut s = ap.alpha0;
            for (l, (a, g)) in ap.alpha.iter().zip(&ap.gamma).enumerate() {
                let lag = l + 1;
                s += a * if lag >= u {
                    obs_shock(pos - lag as isize, *g)
                } else {
                    self.kappa[l] * fc[u - lag - 1]
                };
            }
            for (m, b) in ap.beta.iter().enumerate() {
                let lag = m + 1;
                s += b * if lag >= u { obs_sigd(pos - lag as isize) } else { fc[u - lag - 1] };
            }
            fc.push(s);
        }
        Ok(fc)
    }

    pub fn path(&self, origin: usize, horizon: usize) -> Result<ForecastPath> {
        Ok(ForecastPath {
            origin,
            horizon,
            mean: self.mean(origin, horizon)?,
            scale_delta: self.scale(origin, horizon)?,
        })
    }

    /// In-sample one-step predictions `W_t - Z_t` over the information
    /// window starting at index 0.
    pub fn one_step_predictions(&self) -> Vec<f64> {
        self.global
            .z
            .iter()
            .enumerate()
            .map(|(t, z)| self.history.values[t] - z)
            .collect()
    }
}

/// Mean forecasts `Ŵ_{κ+1|κ} … Ŵ_{κ+h|κ}` using `history` up to `origin`.
pub fn forecast_mean(fit: &FitResult, history: &WindSeries, origin: usize, horizon: usize) -> Result<Vec<f64>> {
    let known = history.head(origin + 1);
    Forecaster::new(fit, &known)?.mean(origin, horizon)
}

/// Expected `σ^δ` path `E[σ^δ_{κ+1}] … E[σ^δ_{κ+h}]`.
pub fn forecast_scale(fit: &FitResult, history: &WindSeries, origin: usize, horizon: usize) -> Result<Vec<f64>> {
    let known = history.head(origin + 1);
    Forecaster::new(fit, &known)?.scale(origin, horizon)
}

/// `h` copies of `W_κ`.
pub fn persistence_forecast(history: &WindSeries, origin: usize, horizon: usize) -> Result<Vec<f64>> {
    let w = *history
        .values
        .get(origin)
        .ok_or_else(|| invalid(format!("origin {origin} is outside the history")))?;
    if !w.is_finite() {
        return Err(data(format!("value at origin {origin} is missing")));
    }
    Ok(vec![w; horizon])
}
