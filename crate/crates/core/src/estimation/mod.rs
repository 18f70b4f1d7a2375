//! Two-stage estimation: least-squares start values for the mean, then
//! joint quasi-maximum likelihood over every parameter.
//!
//! The optimiser works on an unconstrained vector (see [`Layout`]):
//! `d = u/(2√(1+u²))`, AR and MA polynomials through partial autocorrelations
//! `tanh(u)`, `γ = tanh(u)`, logs for `α_0, α, β, δ, ξ, ν - 2` and a scaled
//! logistic for the exponents, which keeps them in `(0.05, 100)`.

mod css;
mod likelihood;
pub mod optim;
mod params;
mod stage1;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::aparch::{asym_power_moment, AparchParams, SkewTParams};
use crate::arfima::{ArfimaParams, DEFAULT_TRUNCATION};
use crate::error::{data, invalid, Error, Result};
use crate::ingestion::WindSeries;
use crate::seasonal::{SeasonalColumns, SeasonalSpec};

pub use likelihood::{qml_negloglik, Likelihood, Paths};
pub use params::{Layout, ModelKind, ModelParams, Orders};
pub use stage1::stage1_start_values;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative objective change that counts as converged.
    pub rel_tol: f64,
    /// Lags kept from the fractional differencing expansion.
    pub truncation: usize,
    /// Compute standard errors from the numerical Hessian.
    pub std_errors: bool,
    /// Lower bound on the scale in the objective, as a fraction of the
    /// mean absolute one-step change of the series; 0 disables it.
    #[serde(default)]
    pub scale_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            rel_tol: 1e-8,
            truncation: DEFAULT_TRUNCATION,
            std_errors: true,
            scale_floor: DEFAULT_SCALE_FLOOR,
        }
    }
}

/// Estimated model with its fit statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub orders: Orders,
    /// Seasonal specification with the fitted exponents.
    pub spec: SeasonalSpec,
    pub params: ModelParams,
    /// Parameter names in layout order.
    pub labels: Vec<String>,
    /// Natural-scale standard errors in layout order; `None` when the
    /// Hessian was not positive definite or was not requested.
    pub std_errors: Option<Vec<f64>>,
    pub loglik: f64,
    /// Absolute scale floor of the objective (see [`Likelihood::with_scale_floor`]).
    #[serde(default)]
    pub scale_floor: f64,
    /// `(-2 loglik + k ln n) / n`.
    pub bic: f64,
    pub n_obs: usize,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Pre-sample level of the scale recursion on the fitted sample.
    pub presample: f64,
    /// In-sample mean squared one-step error.
    pub mse: f64,
    /// Sample variance of the fitted series.
    #[serde(default)]
    pub variance: f64,
    /// Standardised residuals (not serialised).
    #[serde(skip)]
    pub eta: Vec<f64>,
    /// Conditional scale (not serialised).
    #[serde(skip)]
    pub sigma: Vec<f64>,
    /// Innovations `Z_t` (not serialised).
    #[serde(skip)]
    pub innovations: Vec<f64>,
}

/// Per-observation BIC.
pub fn bic(loglik: f64, n_params: usize, n_obs: usize) -> f64 {
    let n = n_obs as f64;
    (-2.0 * loglik + n_params as f64 * n.ln()) / n
}

impl FitResult {
    pub fn layout(&self) -> Layout {
        let base = self.spec.with_p_vector(&self.params.p_exponents).unwrap_or_else(|_| self.spec.clone());
        Layout::new(&base, self.model, self.orders, self.params.arfima.truncation)
    }

    /// Natural-scale estimates in layout order.
    pub fn estimates(&self) -> Vec<f64> {
        self.layout().natural(&self.params).expect("fitted parameters match their layout")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Estimate / standard error table with significance stars
    /// (`***` 1 %, `**` 5 %, `*` 10 %).
    pub fn to_table(&self) -> String {
        let est = self.estimates();
        let rows = significance_report(self).ok();
        let mut out = format!("{:<16}{:>16}{:>14}\n", "", "Estimate", "Std. Error");
        for (i, (label, v)) in self.labels.iter().zip(&est).enumerate() {
            let (se, stars) = match &rows {
                Some(r) => {
                    let p = r[i].p_value;
                    let stars = if p < 0.01 {
                        "***"
                    } else if p < 0.05 {
                        "**"
                    } else if p < 0.1 {
                        "*"
                    } else {
                        ""
                    };
                    (format!("{:.6}", r[i].std_error), stars)
                }
                None => ("n/a".to_string(), ""),
            };
            out.push_str(&format!("{label:<16}{:>13.7}{stars:<3}{se:>14}\n", v));
        }
        out.push_str(&format!("{:<16}{:>16.4}\n", "BIC", self.bic));
        out
    }
}

/// Rounds of filtered least squares for the mean before the joint search.
const GLS_ROUNDS: usize = 4;
const DEFAULT_SCALE_FLOOR: f64 = 0.05;

/// Neutral dynamics used as the optimiser's starting point.
fn start_dynamics(orders: Orders, truncation: usize) -> (ArfimaParams, AparchParams, SkewTParams) {
    let arfima = ArfimaParams {
        d: 0.1,
        ar: vec![0.05; orders.ar],
        ma: vec![0.05; orders.ma],
        truncation,
    };
    let alpha: Vec<f64> = (0..orders.arch).map(|l| if l == 0 { 0.1 } else { 0.01 }).collect();
    let beta = vec![0.8 / orders.garch.max(1) as f64; orders.garch];
    let aparch = AparchParams {
        alpha0: 1.0,
        alpha,
        beta,
        gamma: vec![0.0; orders.arch],
        delta: 1.0,
    };
    (arfima, aparch, SkewTParams { xi: 1.0, nu: 8.0 })
}

fn check_series(series: &WindSeries) -> Result<()> {
    if series.values.iter().any(|v| !v.is_finite()) {
        return Err(data("series contains missing values; interpolate gaps first"));
    }
    Ok(())
}

/// Fits the model to the whole of `series`, whose first value is time
/// index 0 of the seasonal regressors.
pub fn fit(series: &WindSeries, spec: &SeasonalSpec, orders: Orders, model: ModelKind, options: &FitOptions) -> Result<FitResult> {
    check_series(series)?;
    spec.validate()?;
    if options.truncation < 1 {
        return Err(invalid("truncation must be at least one lag"));
    }
    let base = match model {
        ModelKind::Fourier => spec.classical(),
        ModelKind::Pgen => spec.clone(),
    };
    let (theta, ps) = stage1_start_values(series, &base, model)?;
    let spec_p = base.with_p_vector(&ps)?;
    let layout = Layout::new(&spec_p, model, orders, options.truncation);
    let n = series.len();
    if n < 10 * layout.len() {
        return Err(data(format!("{n} observations are too few for {} parameters", layout.len())));
    }
    let (mut arfima, mut aparch, skewt) = start_dynamics(orders, options.truncation);
    let mut mean = vec![0.0; n];
    let columns = SeasonalColumns::new(&spec_p, 0..n);
    columns.mean_into(&theta, &mut mean);
    let eps: Vec<f64> = series.values.iter().zip(&mean).map(|(w, m)| w - m).collect();
    if eps.iter().any(|e| e.abs() > 0.0) {
        arfima = css::css_start(&eps, orders.ar, orders.ma, options.truncation);
    }
    let mut start = ModelParams {
        theta,
        p_exponents: ps,
        arfima,
        aparch: aparch.clone(),
        skewt,
    };
    let floor = options.scale_floor * mean_abs_change(&series.values);
    let mut lik = Likelihood::new(&series.values, &spec_p).with_scale_floor(floor);
    let z = lik.innovations(&start);
    let level = z.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let scale = level * (1.0 + 1e-300);
    if !(scale > 1e-12 * (1.0 + start.theta[0].abs())) {
        log::warn!("residuals vanish: the regression fits the series exactly");
        return exact_fit(series, &spec_p, model, orders, start);
    }
    let kappa = asym_power_moment(0.0, 1.0, &skewt)?;
    let persistence = aparch.alpha.iter().sum::<f64>() * kappa + aparch.beta.iter().sum::<f64>();
    aparch.alpha0 = level / kappa * (1.0 - persistence);
    start.aparch = aparch;
    let mut u0 = layout.encode(&start)?;
    // Scale and shape first, with the mean and memory held at their
    // start values; a joint search from a flat scale start can wander
    // into degenerate power exponents.
    // Then all dynamics with the mean still fixed, so that a nearly
    // integrated memory cannot trade off against a drifting level.
    let block_opts = optim::BfgsOptions {
        max_iter: 300,
        rel_tol: 1e-7,
        ..Default::default()
    };
    let block_fit = |u0: &mut Vec<f64>, k0: usize, lik: &mut Likelihood<'_>| {
        let block = optim::bfgs(
            |v| {
                let mut u = u0.clone();
                u[k0..].copy_from_slice(v);
                lik.mean_objective(&layout, &u)
            },
            &u0[k0..],
            &block_opts,
        );
        if block.f.is_finite() {
            u0[k0..].copy_from_slice(&block.x);
        }
        block.f
    };
    let gls = |u: &[f64], lik: &mut Likelihood<'_>| -> Result<Option<Vec<f64>>> {
        let current = layout.decode(u)?;
        let sigma = lik.paths(&current).sigma;
        Ok(css::gls_theta(&series.values, &columns, layout.n_theta, &current.arfima, &sigma).map(|theta| {
            let mut trial = u.to_vec();
            trial[..theta.len()].copy_from_slice(&theta);
            trial
        }))
    };
    let mut best = block_fit(&mut u0, layout.alpha0_index(), &mut lik);
    if let Some(mut trial) = gls(&u0, &mut lik)? {
        let f = block_fit(&mut trial, layout.alpha0_index(), &mut lik);
        if f < best {
            best = f;
            u0 = trial;
        }
    }
    best = best.min(block_fit(&mut u0, layout.d_index(), &mut lik));
    // Alternate filtered least squares for the mean with the dynamics.
    for _ in 0..GLS_ROUNDS {
        let Some(mut trial) = gls(&u0, &mut lik)? else {
            break;
        };
        let f = block_fit(&mut trial, layout.d_index(), &mut lik);
        if !(f < best - 1e-6) {
            break;
        }
        log::debug!("filtered least squares round: objective {best:.8} -> {f:.8}");
        best = f;
        u0 = trial;
    }
    let bfgs_opts = optim::BfgsOptions {
        max_iter: options.max_iter,
        rel_tol: options.rel_tol,
        ..Default::default()
    };
    let min = optim::bfgs(|u| lik.mean_objective(&layout, u), &u0, &bfgs_opts);
    let params = layout.decode(&min.x)?;
    if !min.converged {
        log::warn!("optimiser stopped after {} iterations without converging", min.iterations);
    }
    finish(series, &spec_p, model, orders, layout, params, min.converged, min.iterations, &min.x, options, floor)
}

/// A [`FitResult`] for given parameters, without optimisation. Useful for
/// forecasting and diagnostics under known dynamics.
pub fn evaluate_at(series: &WindSeries, spec: &SeasonalSpec, model: ModelKind, params: ModelParams) -> Result<FitResult> {
    check_series(series)?;
    params.validate(spec)?;
    let spec_p = params.seasonal_spec(spec)?;
    let layout = Layout::new(&spec_p, model, params.orders(), params.arfima.truncation);
    let u = layout.encode(&params)?;
    let options = FitOptions {
        std_errors: false,
        ..Default::default()
    };
    finish(series, &spec_p, model, params.orders(), layout, params, true, 0, &u, &options, 0.0)
}

fn mean_abs_change(x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (x.len().max(2) - 1) as f64
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
}

#[allow(clippy::too_many_arguments)]
fn finish(
    series: &WindSeries,
    spec: &SeasonalSpec,
    model: ModelKind,
    orders: Orders,
    layout: Layout,
    params: ModelParams,
    converged: bool,
    iterations: usize,
    u: &[f64],
    options: &FitOptions,
    floor: f64,
) -> Result<FitResult> {
    let n = series.len();
    let mut lik = Likelihood::new(&series.values, spec).with_scale_floor(floor);
    let nll = lik.negloglik(&params);
    let paths = lik.paths(&params);
    let std_errors = if options.std_errors {
        standard_errors(&mut lik, &layout, u)
    } else {
        None
    };
    match params.aparch.persistence(&params.skewt) {
        Ok(pers) if pers >= 1.0 => log::warn!("fitted scale recursion is not stationary (persistence {pers:.4})"),
        Err(e) => log::warn!("persistence unavailable: {e}"),
        _ => {}
    }
    let spec_fit = params.seasonal_spec(spec)?;
    let k = layout.len();
    let mse = paths.innovations.iter().map(|z| z * z).sum::<f64>() / n as f64;
    Ok(FitResult {
        model,
        orders,
        spec: spec_fit,
        labels: layout.labels(spec),
        std_errors,
        loglik: -nll,
        scale_floor: floor,
        bic: bic(-nll, k, n),
        n_obs: n,
        n_params: k,
        converged,
        iterations,
        presample: paths.presample,
        mse,
        variance: sample_variance(&series.values),
        eta: paths.eta,
        sigma: paths.sigma,
        innovations: paths.innovations,
        params,
    })
}

fn exact_fit(series: &WindSeries, spec: &SeasonalSpec, model: ModelKind, orders: Orders, mut params: ModelParams) -> Result<FitResult> {
    params.aparch.alpha0 = f64::MIN_POSITIVE;
    let layout = Layout::new(spec, model, orders, params.arfima.truncation);
    let n = series.len();
    let k = layout.len();
    Ok(FitResult {
        model,
        orders,
        spec: spec.clone(),
        labels: layout.labels(spec),
        std_errors: None,
        loglik: f64::INFINITY,
        scale_floor: 0.0,
        bic: f64::NEG_INFINITY,
        n_obs: n,
        n_params: k,
        converged: true,
        iterations: 0,
        presample: 0.0,
        mse: 0.0,
        variance: sample_variance(&series.values),
        eta: vec![0.0; n],
        sigma: vec![0.0; n],
        innovations: vec![0.0; n],
        params,
    })
}

/// Delta-method standard errors: central-difference Hessian of the total
/// negative log-likelihood on the unconstrained scale (step `1e-4`),
/// inverted and mapped through the Jacobian of the parameter transform.
fn standard_errors(lik: &mut Likelihood<'_>, layout: &Layout, u: &[f64]) -> Option<Vec<f64>> {
    let n_obs = {
        let p = layout.decode(u).ok()?;
        lik.innovations(&p).len() as f64
    };
    let mut total = |x: &[f64]| lik.mean_objective(layout, x) * n_obs;
    let h = optim::hessian(&mut total, u, 1e-4);
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cov_u = h.cholesky()?.inverse();
    let k = u.len();
    let mut jac = nalgebra::DMatrix::zeros(k, k);
    let mut up = u.to_vec();
    for j in 0..k {
        let step = 1e-6 * u[j].abs().max(1.0);
        up[j] = u[j] + step;
        let plus = layout.natural(&layout.decode(&up).ok()?).ok()?;
        up[j] = u[j] - step;
        let minus = layout.natural(&layout.decode(&up).ok()?).ok()?;
        up[j] = u[j];
        for i in 0..k {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    let cov = &jac * cov_u * jac.transpose();
    let se: Vec<f64> = (0..k).map(|i| cov[(i, i)]).map(f64::sqrt).collect();
    se.iter().all(|v| v.is_finite()).then_some(se)
}

/// Outcome of [`select_order`].
#[derive(Debug, Clone)]
pub struct OrderSelection {
    pub best: FitResult,
    /// Every candidate with its BIC, `None` when the fit failed or did not
    /// converge.
    pub candidates: Vec<(Orders, Option<f64>)>,
}

/// Fits every candidate (in parallel) and keeps the converged fit with the
/// smallest BIC; exact ties go to the candidate with fewer parameters.
pub fn select_order(
    series: &WindSeries,
    spec: &SeasonalSpec,
    candidates: &[Orders],
    model: ModelKind,
    options: &FitOptions,
) -> Result<OrderSelection> {
    if candidates.is_empty() {
        return Err(invalid("no candidate orders given"));
    }
    let fits: Vec<(Orders, Result<FitResult>)> = candidates
        .par_iter()
        .map(|o| (*o, fit(series, spec, *o, model, options)))
        .collect();
    let table = fits
        .iter()
        .map(|(o, r)| (*o, r.as_ref().ok().filter(|f| f.converged).map(|f| f.bic)))
        .collect();
    let best = fits
        .into_iter()
        .filter_map(|(_, r)| r.ok().filter(|f| f.converged))
        .min_by(|a, b| a.bic.total_cmp(&b.bic).then(a.n_params.cmp(&b.n_params)))
        .ok_or(Error::NoConvergence)?;
    Ok(OrderSelection {
        best,
        candidates: table,
    })
}

/// Wald test of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub null: f64,
    pub t_stat: f64,
    /// Two-sided normal p-value.
    pub p_value: f64,
}

/// Two-sided normal p-value of a t statistic.
pub fn two_sided_p(t: f64) -> f64 {
    erfc(t.abs() / std::f64::consts::SQRT_2)
}

/// t statistics against 0, except `ξ` (against 1) and the exponents
/// (against 2).
pub fn significance_report(fit: &FitResult) -> Result<Vec<Significance>> {
    let se = fit.std_errors.as_ref().ok_or(Error::MissingStdErrors)?;
    let layout = fit.layout();
    let est = layout.natural(&fit.params)?;
    let nulls = layout.null_values();
    Ok(fit
        .labels
        .iter()
        .zip(est.iter().zip(se).zip(&nulls))
        .map(|(label, ((&estimate, &std_error), &null))| {
            let t_stat = if estimate == null { 0.0 } else { (estimate - null) / std_error };
            Significance {
                label: label.clone(),
                estimate,
                std_error,
                null,
                t_stat,
                p_value: two_sided_p(t_stat),
            }
        })
        .collect())
}

/// Regression mean `X(t) θ` for `t` in `range`, using the fitted exponents.
pub fn deterministic_mean(fit: &FitResult, range: std::ops::Range<usize>) -> Vec<f64> {
    let cols = SeasonalColumns::new(&fit.spec, range.clone());
    let mut out = vec![0.0; range.len()];
    cols.mean_into(&fit.params.theta, &mut out);
    out
}
