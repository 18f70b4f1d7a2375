use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aparch::{AparchParams, SkewTParams};
use crate::arfima::{coeffs_to_pacf, pacf_to_coeffs, ArfimaParams};
use crate::error::{invalid, Error, Result};
use crate::seasonal::{SeasonalSpec, P_MAX, P_MIN};

/// Seasonal mean family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Classical sines and cosines (every exponent fixed at 2).
    Fourier,
    /// p-generalised functions with one free exponent per marginal function.
    Pgen,
}

impl ModelKind {
    /// Row name in accuracy reports.
    pub fn report_name(&self) -> &'static str {
        match self {
            ModelKind::Fourier => "Model 1",
            ModelKind::Pgen => "Model 2",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Fourier => "fourier",
            ModelKind::Pgen => "pgen",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fourier" | "model1" | "1" => Ok(ModelKind::Fourier),
            "pgen" | "model2" | "2" => Ok(ModelKind::Pgen),
            other => Err(invalid(format!("unknown model '{other}', expected fourier or pgen"))),
        }
    }
}

/// ARFIMA(j, d, q) and APARCH(Q, P) orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Orders {
    /// `j`, autoregressive lags.
    pub ar: usize,
    /// `q`, moving-average lags.
    pub ma: usize,
    /// `Q`, lagged shocks in the scale equation.
    pub arch: usize,
    /// `P`, lagged scales in the scale equation.
    pub garch: usize,
}

impl Orders {
    pub const fn new(ar: usize, ma: usize, arch: usize, garch: usize) -> Self {
        Self { ar, ma, arch, garch }
    }
}

impl Default for Orders {
    /// Two AR lags, one MA lag, one shock lag and two scale lags.
    fn default() -> Self {
        Self::new(2, 1, 1, 2)
    }
}

impl fmt::Display for Orders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.ar, self.ma, self.arch, self.garch)
    }
}

impl FromStr for Orders {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(invalid(format!("orders '{s}' must be four comma-separated integers j,q,Q,P")));
        }
        let mut v = [0usize; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| invalid(format!("orders '{s}': '{p}' is not a non-negative integer")))?;
        }
        Ok(Self::new(v[0], v[1], v[2], v[3]))
    }
}

/// Every parameter of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Regression coefficients in [`SeasonalSpec::column_labels`] order.
    pub theta: Vec<f64>,
    /// Exponents in [`SeasonalSpec::basis_keys`] order.
    pub p_exponents: Vec<f64>,
    pub arfima: ArfimaParams,
    pub aparch: AparchParams,
    pub skewt: SkewTParams,
}

impl ModelParams {
    pub fn orders(&self) -> Orders {
        Orders::new(
            self.arfima.ar.len(),
            self.arfima.ma.len(),
            self.aparch.alpha.len(),
            self.aparch.beta.len(),
        )
    }

    pub fn validate(&self, spec: &SeasonalSpec) -> Result<()> {
        if self.theta.len() != spec.regression_len() {
            return Err(invalid(format!(
                "{} regression coefficients for a specification with {}",
                self.theta.len(),
                spec.regression_len()
            )));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(invalid("regression coefficients must be finite"));
        }
        spec.with_p_vector(&self.p_exponents)?;
        self.arfima.validate()?;
        self.aparch.validate()?;
        self.skewt.validate()
    }

    /// Seasonal specification carrying these exponents.
    pub fn seasonal_spec(&self, spec: &SeasonalSpec) -> Result<SeasonalSpec> {
        spec.with_p_vector(&self.p_exponents)
    }
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// Memory map `d = u / (2√(1 + u²))`. Unlike `tanh` it flattens only
/// polynomially near `|d| = 1/2`, so a search that strays there can return.
pub(crate) fn d_from_u(u: f64) -> f64 {
    0.5 * u / (1.0 + u * u).sqrt()
}

pub(crate) fn d_to_u(d: f64) -> f64 {
    2.0 * d / (1.0 - 4.0 * d * d).sqrt()
}

/// Position of every parameter in the flat vector used by the optimiser:
/// regression, exponents (p-generalised model only), `d`, `φ`, `θ`, `α_0`,
/// `α`, `β`, `γ`, `δ`, `ξ`, `ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub n_theta: usize,
    pub n_p: usize,
    pub orders: Orders,
    pub truncation: usize,
    /// Exponents used when they are not free.
    pub fixed_p: Vec<f64>,
}

impl Layout {
    pub fn new(spec: &SeasonalSpec, model: ModelKind, orders: Orders, truncation: usize) -> Self {
        let fixed_p = spec.p_vector();
        Self {
            n_theta: spec.regression_len(),
            n_p: if model == ModelKind::Pgen { fixed_p.len() } else { 0 },
            orders,
            truncation,
            fixed_p,
        }
    }

    pub fn len(&self) -> usize {
        let o = &self.orders;
        self.n_theta + self.n_p + 1 + o.ar + o.ma + 1 + 2 * o.arch + o.garch + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `d`; everything before it belongs to the mean.
    pub fn d_index(&self) -> usize {
        self.n_theta + self.n_p
    }

    /// Index of `α_0`; everything from here on only affects the scale and
    /// the innovation law.
    pub fn alpha0_index(&self) -> usize {
        self.d_index() + 1 + self.orders.ar + self.orders.ma
    }

    pub fn labels(&self, spec: &SeasonalSpec) -> Vec<String> {
        let mut out = spec.column_labels();
        if self.n_p > 0 {
            out.extend(spec.basis_keys().iter().map(|k| k.label()));
        }
        out.push("d".into());
        out.extend((1..=self.orders.ar).map(|i| format!("phi_{i}")));
        out.extend((1..=self.orders.ma).map(|i| format!("theta_{i}")));
        out.push("alpha_0".into());
        out.extend((1..=self.orders.arch).map(|i| format!("alpha_{i}")));
        out.extend((1..=self.orders.garch).map(|i| format!("beta_{i}")));
        out.extend((1..=self.orders.arch).map(|i| format!("gamma_{i}")));
        out.push("delta".into());
        out.push("xi".into());
        out.push("nu".into());
        out
    }

    /// Value of each parameter under the usual significance null: 1 for
    /// `ξ`, 2 for exponents, 0 otherwise.
    pub fn null_values(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for slot in &mut v[self.n_theta..self.n_theta + self.n_p] {
            *slot = 2.0;
        }
        let xi = self.len() - 2;
        v[xi] = 1.0;
        v
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if params.orders() != self.orders || params.theta.len() != self.n_theta {
            return Err(invalid("parameter dimensions do not match the layout"));
        }
        if params.p_exponents.len() != self.fixed_p.len() {
            return Err(invalid("exponent count does not match the layout"));
        }
        Ok(())
    }

    /// Natural-scale values in layout order.
    pub fn natural(&self, params: &ModelParams) -> Result<Vec<f64>> {
        self.check(params)?;
        let mut v = params.theta.clone();
        if self.n_p > 0 {
            v.extend(&params.p_exponents);
        }
        v.push(params.arfima.d);
        v.extend(&params.arfima.ar);
        v.extend(&params.arfima.ma);
        v.push(params.aparch.alpha0);
        v.extend(&params.aparch.alpha);
        v.extend(&params.aparch.beta);
        v.extend(&params.aparch.gamma);
        v.push(params.aparch.delta);
        v.push(params.skewt.xi);
        v.push(params.skewt.nu);
        Ok(v)
    }

    /// Maps valid parameters to the unconstrained optimisation scale.
    pub fn encode(&self, params: &ModelParams) -> Result<Vec<f64>> {
        self.check(params)?;
        let log = |x: f64, what: &str| {
            if x > 0.0 {
                Ok(x.ln())
            } else {
                Err(invalid(format!("{what} = {x} must be positive")))
            }
        };
        let mut v = params.theta.clone();
        if self.n_p > 0 {
            for &p in &params.p_exponents {
                if !(p > P_MIN && p < P_MAX) {
                    return Err(invalid(format!("exponent {p} outside ({P_MIN}, {P_MAX})")));
                }
                v.push(logit((p - P_MIN) / (P_MAX - P_MIN)));
            }
        }
        v.push(d_to_u(params.arfima.d));
        let ar = coeffs_to_pacf(&params.arfima.ar).ok_or_else(|| invalid("AR part is not stationary"))?;
        v.extend(ar.iter().map(|r| r.atanh()));
        let neg: Vec<f64> = params.arfima.ma.iter().map(|x| -x).collect();
        let ma = coeffs_to_pacf(&neg).ok_or_else(|| invalid("MA part is not invertible"))?;
        v.extend(ma.iter().map(|r| r.atanh()));
        v.push(log(params.aparch.alpha0, "alpha0")?);
        for a in params.aparch.alpha.iter().chain(&params.aparch.beta) {
            v.push(log(*a, "alpha/beta")?);
        }
        v.extend(params.aparch.gamma.iter().map(|g| g.atanh()));
        v.push(log(params.aparch.delta, "delta")?);
        v.push(log(params.skewt.xi, "xi")?);
        v.push(log(params.skewt.nu - 2.0, "nu - 2")?);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(invalid("parameters sit on the boundary of the admissible set"));
        }
        Ok(v)
    }

    /// Inverse of [`encode`](Self::encode). Fails only when the mapped
    /// values overflow or round onto a boundary.
    pub fn decode(&self, u: &[f64]) -> Result<ModelParams> {
        if u.len() != self.len() {
            return Err(invalid(format!("expected {} values, got {}", self.len(), u.len())));
        }
        let mut it = u.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let theta = take(self.n_theta);
        let p_exponents = if self.n_p > 0 {
            take(self.n_p)
                .into_iter()
                .map(|x| P_MIN + (P_MAX - P_MIN) * logistic(x))
                .collect()
        } else {
            self.fixed_p.clone()
        };
        let d = d_from_u(take(1)[0]);
        let ar = pacf_to_coeffs(&take(self.orders.ar).iter().map(|x| x.tanh()).collect::<Vec<_>>());
        let ma: Vec<f64> = pacf_to_coeffs(&take(self.orders.ma).iter().map(|x| x.tanh()).collect::<Vec<_>>())
            .into_iter()
            .map(|x| -x)
            .collect();
        let alpha0 = take(1)[0].exp();
        let alpha: Vec<f64> = take(self.orders.arch).iter().map(|x| x.exp()).collect();
        let beta: Vec<f64> = take(self.orders.garch).iter().map(|x| x.exp()).collect();
        let gamma: Vec<f64> = take(self.orders.arch).iter().map(|x| x.tanh()).collect();
        let rest = take(3);
        let params = ModelParams {
            theta,
            p_exponents,
            arfima: ArfimaParams {
                d,
                ar,
                ma,
                truncation: self.truncation,
            },
            aparch: AparchParams {
                alpha0,
                alpha,
                beta,
                gamma,
                delta: rest[0].exp(),
            },
            skewt: SkewTParams {
                xi: rest[1].exp(),
                nu: 2.0 + rest[2].exp(),
            },
        };
        params.arfima.validate()?;
        params.aparch.validate()?;
        params.skewt.validate()?;
        if params.p_exponents.iter().any(|p| !(*p > 0.0)) {
            return Err(invalid("exponent underflow"));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_params(spec: &SeasonalSpec) -> ModelParams {
        ModelParams {
            theta: (0..spec.regression_len()).map(|i| 0.1 * i as f64 - 0.5).collect(),
            p_exponents: vec![1.3, 2.0, 4.5886, 0.7, 51.313, 2.4709, 2.0, 3.0],
            arfima: ArfimaParams::new(0.431, vec![1.2334, -0.2698], vec![-0.8065], 1000).unwrap(),
            aparch: AparchParams::new(0.0012, vec![0.1426], vec![0.5257, 0.3645], vec![-0.1208], 0.9325).unwrap(),
            skewt: SkewTParams::new(1.0672, 7.8622).unwrap(),
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let spec = SeasonalSpec::default_with_scale(1.0);
        let p = sample_params(&spec);
        for model in [ModelKind::Fourier, ModelKind::Pgen] {
            let mut p = p.clone();
            if model == ModelKind::Fourier {
                p.p_exponents = spec.p_vector();
            }
            let layout = Layout::new(&spec, model, Orders::default(), 1000);
            let u = layout.encode(&p).unwrap();
            assert_eq!(u.len(), layout.len());
            let back = layout.decode(&u).unwrap();
            let (a, b) = (layout.natural(&p).unwrap(), layout.natural(&back).unwrap());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
            }
            assert_eq!(layout.labels(&spec).len(), layout.len());
        }
    }

    #[test]
    fn orders_parse() {
        assert_eq!("2,1,1,2".parse::<Orders>().unwrap(), Orders::default());
        assert!("2,1".parse::<Orders>().is_err());
        assert_eq!(Orders::default().to_string(), "2,1,1,2");
        assert_eq!("PGEN".parse::<ModelKind>().unwrap(), ModelKind::Pgen);
    }

    #[test]
    fn null_values_mark_xi_and_exponents() {
        let spec = SeasonalSpec::default_with_scale(1.0);
        let layout = Layout::new(&spec, ModelKind::Pgen, Orders::default(), 1000);
        let labels = layout.labels(&spec);
        let nulls = layout.null_values();
        for (l, v) in labels.iter().zip(&nulls) {
            let want = if l == "xi" {
                1.0
            } else if l.starts_with("p_") {
                2.0
            } else {
                0.0
            };
            assert_eq!(*v, want, "{l}");
        }
    }
}
