//! Power curve, point-forecast losses and the rolling-origin backtest.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{data, invalid, Result};
use crate::estimation::FitResult;
use crate::forecast::{Forecaster, DEFAULT_MAX_HORIZON, DEFAULT_WINDOW};
use crate::ingestion::{SampleSplit, WindSeries};

/// Turbine power curve: zero below cut-in, cubic `½ C_p ρ A v³` capped at
/// the rated power, flat up to cut-out, zero from cut-out on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    /// m/s
    pub cut_in: f64,
    /// m/s
    pub rated_speed: f64,
    /// m/s
    pub cut_out: f64,
    /// kW
    pub rated_power: f64,
    /// Efficiency, calibrated so the cubic reaches the rated power exactly
    /// at the rated speed.
    pub cp: f64,
    /// kg/m³
    pub rho: f64,
    /// m²
    pub rotor_area: f64,
}

impl PowerCurve {
    pub fn new(cut_in: f64, rated_speed: f64, cut_out: f64, rated_power: f64, rho: f64, rotor_diameter: f64) -> Result<Self> {
        if !(0.0 < cut_in && cut_in < rated_speed && rated_speed < cut_out && cut_out.is_finite()) {
            return Err(invalid(format!(
                "power curve speeds must satisfy 0 < cut-in {cut_in} < rated {rated_speed} < cut-out {cut_out}"
            )));
        }
        if !(rated_power > 0.0 && rho > 0.0 && rotor_diameter > 0.0) {
            return Err(invalid("rated power, air density and rotor diameter must be positive"));
        }
        let rotor_area = std::f64::consts::PI * (0.5 * rotor_diameter).powi(2);
        let cp = rated_power * 1000.0 / (0.5 * rho * rotor_area * rated_speed.powi(3));
        Ok(Self {
            cut_in,
            rated_speed,
            cut_out,
            rated_power,
            cp,
            rho,
            rotor_area,
        })
    }

    /// Fuhrländer MD 77: cut-in 3 m/s, rated 1500 kW at 13 m/s, cut-out
    /// 20 m/s, 77 m rotor, ρ = 1.25 kg/m³.
    pub fn md77() -> Self {
        Self::new(3.0, 13.0, 20.0, 1500.0, 1.25, 77.0).expect("valid built-in curve")
    }

    /// GE 1.6 MW class: cut-in 3.5 m/s, rated 1600 kW at 12 m/s, cut-out
    /// 25 m/s, 82.5 m rotor. Manufacturer-style defaults, not fitted values.
    pub fn ge16() -> Self {
        Self::new(3.5, 12.0, 25.0, 1600.0, 1.25, 82.5).expect("valid built-in curve")
    }

    /// Output in kW at a non-negative speed.
    pub fn power(&self, speed: f64) -> Result<f64> {
        if !(speed >= 0.0) || !speed.is_finite() {
            return Err(invalid(format!("wind speed {speed} must be finite and non-negative")));
        }
        Ok(if speed < self.cut_in || speed >= self.cut_out {
            0.0
        } else if speed >= self.rated_speed {
            self.rated_power
        } else {
            (0.5 * self.cp * self.rho * self.rotor_area * speed.powi(3) / 1000.0).min(self.rated_power)
        })
    }
}

/// Output of `curve` at `speed`, in kW.
pub fn power_output(speed: f64, curve: &PowerCurve) -> Result<f64> {
    curve.power(speed)
}

/// Power curve error of one forecast: `τ (Pow(W) - Pow(Ŵ))` when `Ŵ ≤ W`,
/// `(1 - τ)(Pow(Ŵ) - Pow(W))` otherwise. The branch follows the speeds, so
/// across the cut-out the value can be negative. Negative forecasts are
/// evaluated at zero speed.
pub fn pce_loss(actual: f64, forecast: f64, tau: f64, curve: &PowerCurve) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid(format!("tau = {tau} must lie in [0, 1]")));
    }
    let pa = curve.power(actual)?;
    let pf = curve.power(forecast.max(0.0))?;
    Ok(if forecast <= actual {
        tau * (pa - pf)
    } else {
        (1.0 - tau) * (pf - pa)
    })
}

fn check_pairs(actual: &[f64], forecast: &[f64]) -> Result<()> {
    if actual.len() != forecast.len() {
        return Err(invalid(format!("{} actuals but {} forecasts", actual.len(), forecast.len())));
    }
    if actual.is_empty() {
        return Err(invalid("no forecast pairs"));
    }
    Ok(())
}

pub fn rmse(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_pairs(actual, forecast)?;
    let mut s = Kahan::default();
    for (a, f) in actual.iter().zip(forecast) {
        s.add((a - f) * (a - f));
    }
    Ok((s.sum() / actual.len() as f64).sqrt())
}

pub fn mae(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_pairs(actual, forecast)?;
    let mut s = Kahan::default();
    for (a, f) in actual.iter().zip(forecast) {
        s.add((a - f).abs());
    }
    Ok(s.sum() / actual.len() as f64)
}

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum
    }
}

/// A model that issues point forecasts from an origin, using only values
/// up to and including the origin.
pub trait PointForecaster: Sync {
    fn name(&self) -> &str;
    /// Forecasts for `origin + 1 ..= origin + horizon`.
    fn forecast(&self, origin: usize, horizon: usize) -> Result<Vec<f64>>;
}

/// Last observed value at every horizon.
pub struct Persistence<'a> {
    pub series: &'a WindSeries,
}

impl PointForecaster for Persistence<'_> {
    fn name(&self) -> &str {
        "Persistent"
    }

    fn forecast(&self, origin: usize, horizon: usize) -> Result<Vec<f64>> {
        crate::forecast::persistence_forecast(self.series, origin, horizon)
    }
}

/// Fitted model forecasting through [`Forecaster`].
pub struct ModelForecaster<'a> {
    pub name: String,
    inner: Forecaster<'a>,
}

impl<'a> ModelForecaster<'a> {
    pub fn new(name: impl Into<String>, fit: &'a FitResult, series: &'a WindSeries) -> Result<Self> {
        Self::with_window(name, fit, series, DEFAULT_WINDOW)
    }

    pub fn with_window(name: impl Into<String>, fit: &'a FitResult, series: &'a WindSeries, window: usize) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            inner: Forecaster::with_limits(fit, series, window, DEFAULT_MAX_HORIZON)?,
        })
    }
}

impl PointForecaster for ModelForecaster<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forecast(&self, origin: usize, horizon: usize) -> Result<Vec<f64>> {
        self.inner.mean(origin, horizon)
    }
}

/// Returns the realised values: an upper bound on attainable accuracy.
pub struct PerfectForesight<'a> {
    pub series: &'a WindSeries,
}

impl PointForecaster for PerfectForesight<'_> {
    fn name(&self) -> &str {
        "Oracle"
    }

    fn forecast(&self, origin: usize, horizon: usize) -> Result<Vec<f64>> {
        self.series
            .values
            .get(origin + 1..=origin + horizon)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| invalid("horizon runs past the end of the series"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    Rmse,
    Mae,
    Pce(f64),
}

impl Metric {
    pub fn label(&self) -> String {
        match self {
            Metric::Rmse => "RMSE".into(),
            Metric::Mae => "MAE".into(),
            Metric::Pce(tau) => format!("PCE tau = {tau}"),
        }
    }
}

/// How origins are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Origins {
    /// `n` uniform draws with replacement.
    Random(usize),
    /// Every valid origin once, in order.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSettings {
    pub horizon: usize,
    pub origins: Origins,
    pub seed: u64,
    pub taus: Vec<f64>,
    pub curve: PowerCurve,
    /// Score every step up to the horizon instead of the last one only.
    pub all_steps: bool,
}

impl Default for BacktestSettings {
    fn default() -> Self {
        Self {
            horizon: 18,
            origins: Origins::Random(5000),
            seed: 0,
            taus: vec![0.25, 0.5, 0.75],
            curve: PowerCurve::md77(),
            all_steps: false,
        }
    }
}

pub const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub metric: Metric,
    /// January to December; `None` for months without scored targets.
    pub months: Vec<Option<f64>>,
    pub total: f64,
}

impl ReportRow {
    pub fn label(&self) -> String {
        format!("{} {}", self.model, self.metric.label())
    }
}

/// Accuracy per calendar month of the target time and pooled over all
/// targets; rows are grouped by metric, models within each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub horizon: usize,
    pub origins_used: usize,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn row(&self, model: &str, metric: Metric) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model == model && r.metric == metric)
    }

    /// Months as columns, one row per model and metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Model");
        for m in MONTHS {
            out.push(',');
            out.push_str(m);
        }
        out.push_str(",Total\n");
        for row in &self.rows {
            out.push_str(&row.label());
            for v in &row.months {
                match v {
                    Some(v) => write!(out, ",{v:.6}").expect("string write"),
                    None => out.push(','),
                }
            }
            writeln!(out, ",{:.6}", row.total).expect("string write");
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Default)]
struct Accum {
    sq: Kahan,
    abs: Kahan,
    pce: Vec<Kahan>,
    count: usize,
}

/// Scores every model on the same origins drawn from the out-of-sample
/// range. Origins are evaluated in parallel and aggregated in draw order,
/// so reports do not depend on the thread count.
pub fn rolling_backtest(
    series: &WindSeries,
    split: &SampleSplit,
    models: &[&dyn PointForecaster],
    settings: &BacktestSettings,
) -> Result<EvalReport> {
    let h = settings.horizon;
    if h == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    if models.is_empty() {
        return Err(invalid("no models to evaluate"));
    }
    if settings.taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(invalid("every tau must lie in [0, 1]"));
    }
    let out = &split.out_sample;
    if out.end > series.len() || out.len() <= h {
        return Err(data(format!(
            "out-of-sample segment of {} points is too short for horizon {h}",
            out.len()
        )));
    }
    let (lo, hi) = (out.start, out.end - h);
    let origins: Vec<usize> = match settings.origins {
        Origins::All => (lo..hi).collect(),
        Origins::Random(0) => return Err(invalid("need at least one origin")),
        Origins::Random(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            (0..k).map(|_| rng.random_range(lo..hi)).collect()
        }
    };
    let steps: Vec<usize> = if settings.all_steps { (1..=h).collect() } else { vec![h] };
    let forecasts: Vec<Result<Vec<Vec<f64>>>> = origins
        .par_iter()
        .map(|&k| models.iter().map(|m| m.forecast(k, h)).collect())
        .collect();

    let n_tau = settings.taus.len();
    let mut acc = vec![vec![Accum::default(); 13]; models.len()];
    for a in acc.iter_mut().flatten() {
        a.pce = vec![Kahan::default(); n_tau];
    }
    for (&k, fc) in origins.iter().zip(forecasts) {
        let fc = fc?;
        for &u in &steps {
            let target = k + u;
            let actual = series.values[target];
            let month = series.month(target) as usize - 1;
            for (mi, f) in fc.iter().enumerate() {
                let pred = *f.get(u - 1).ok_or_else(|| invalid("model returned a short forecast"))?;
                let e = actual - pred;
                for slot in [month, 12] {
                    let a = &mut acc[mi][slot];
                    a.sq.add(e * e);
                    a.abs.add(e.abs());
                    for (ti, tau) in settings.taus.iter().enumerate() {
                        a.pce[ti].add(pce_loss(actual, pred, *tau, &settings.curve)?);
                    }
                    a.count += 1;
                }
            }
        }
    }
    let mut metrics = vec![Metric::Rmse, Metric::Mae];
    metrics.extend(settings.taus.iter().map(|t| Metric::Pce(*t)));
    let mut rows = Vec::new();
    for metric in &metrics {
        for (mi, model) in models.iter().enumerate() {
            let value = |a: &Accum| -> Option<f64> {
                if a.count == 0 {
                    return None;
                }
                let n = a.count as f64;
                Some(match metric {
                    Metric::Rmse => (a.sq.sum() / n).sqrt(),
                    Metric::Mae => a.abs.sum() / n,
                    Metric::Pce(t) => {
                        let ti = settings.taus.iter().position(|x| x == t).expect("tau in list");
                        a.pce[ti].sum() / n
                    }
                })
            };
            rows.push(ReportRow {
                model: model.name().to_string(),
                metric: *metric,
                months: acc[mi][..12].iter().map(value).collect(),
                total: value(&acc[mi][12]).unwrap_or(f64::NAN),
            });
        }
    }
    Ok(EvalReport {
        horizon: h,
        origins_used: origins.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn md77_anchors() {
        let c = PowerCurve::md77();
        assert_eq!(c.power(2.9).unwrap(), 0.0);
        assert_eq!(c.power(13.0).unwrap(), 1500.0);
        assert_eq!(c.power(19.9).unwrap(), 1500.0);
        assert_eq!(c.power(20.0).unwrap(), 0.0);
        assert!((c.power(13.0 - 1e-12).unwrap() - 1500.0).abs() < 1e-6);
        assert!(c.power(-0.1).is_err());
    }

    #[test]
    fn pce_branches() {
        let c = PowerCurve::md77();
        let p = |v: f64| c.power(v).unwrap();
        assert_eq!(pce_loss(7.0, 7.0, 0.3, &c).unwrap(), 0.0);
        assert!((pce_loss(10.0, 8.0, 0.73, &c).unwrap() - 0.73 * (p(10.0) - p(8.0))).abs() < 1e-9);
        assert!((pce_loss(5.0, 6.0, 0.25, &c).unwrap() - 0.75 * (p(6.0) - p(5.0))).abs() < 1e-9);
        assert!(pce_loss(5.0, 6.0, 1.5, &c).is_err());
        // under-forecast of speed across the cut-out
        assert!(pce_loss(21.0, 15.0, 0.5, &c).unwrap() < 0.0);
    }

    #[test]
    fn error_measures() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!((rmse(&[0.0, 0.0], &[0.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&[0.0, 0.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }
}
