//! Deterministic mean: intercept, linear trend and interacting periodic
//! regressors built from l_{2,p} generalised sine and cosine functions.
//!
//! The regressor for indicator cell `(i1, i2)` is the product of the
//! `i1`-th function of the long period `s1` and the `i2`-th function of the
//! short period `s2`, where function 1 is the constant, even indices are
//! cosines of `π i t / s` and odd indices above one are sines of
//! `π (i - 1) t / s`. With every exponent equal to two this is the classical
//! Fourier interaction model.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Long period of the default specification: one year of 10-minute steps.
pub const YEAR_STEPS: f64 = 52_560.0;
/// Short period of the default specification: one day of 10-minute steps.
pub const DAY_STEPS: f64 = 144.0;

/// Upper bound imposed on fitted exponents.
pub const P_MAX: f64 = 100.0;
/// Lower bound imposed on fitted exponents.
pub const P_MIN: f64 = 0.05;

/// The default 5×5 indicator: four annual-only, four diurnal-only and four
/// interaction terms (the intercept cell is excluded).
pub const DEFAULT_INDICATOR: [[u8; 5]; 5] = [
    [0, 1, 1, 1, 1],
    [1, 1, 1, 0, 0],
    [1, 1, 1, 0, 0],
    [1, 0, 0, 0, 0],
    [1, 0, 0, 0, 0],
];

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("exponent p must be positive and finite, got {p}")))
    }
}

/// `(|sin φ|^p + |cos φ|^p)^{1/p}` in a form that neither overflows nor
/// underflows for large or small `p`.
#[inline]
fn lp_radius(s: f64, c: f64, p: f64) -> f64 {
    let (a, b) = (s.abs(), c.abs());
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == 0.0 {
        return hi;
    }
    hi * (1.0 + (lo / hi).powf(p)).powf(1.0 / p)
}

/// Generalised sine `sin φ / (|sin φ|^p + |cos φ|^p)^{1/p}`.
pub fn sin_p(phi: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if !phi.is_finite() {
        return Err(invalid("angle must be finite"));
    }
    let (s, c) = phi.sin_cos();
    Ok(s / lp_radius(s, c, p))
}

/// Generalised cosine `cos φ / (|sin φ|^p + |cos φ|^p)^{1/p}`.
pub fn cos_p(phi: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if !phi.is_finite() {
        return Err(invalid("angle must be finite"));
    }
    let (s, c) = phi.sin_cos();
    Ok(c / lp_radius(s, c, p))
}

/// Angle `π k t / s` with the product `k t` reduced modulo `2s` first, so
/// large time indices keep full precision.
#[inline]
fn angle(k: f64, t: f64, s: f64) -> f64 {
    PI * ((k * t) % (2.0 * s)) / s
}

/// Frequency multiplier and trigonometric kind of function index `i ≥ 2`.
#[inline]
fn harmonic(i: usize) -> (f64, bool) {
    if i % 2 == 0 {
        (i as f64, true)
    } else {
        ((i - 1) as f64, false)
    }
}

/// The `i`-th periodic function of period `s` at time `t`: `1` for `i = 1`,
/// `cos_p(π i t / s)` for even `i`, `sin_p(π (i-1) t / s)` for odd `i > 1`.
pub fn basis_function(i: usize, s: f64, t: f64, p: f64) -> Result<f64> {
    if i < 1 {
        return Err(invalid("basis function index starts at 1"));
    }
    if i == 1 {
        return Ok(1.0);
    }
    check_p(p)?;
    let (k, is_cos) = harmonic(i);
    let (sn, cs) = angle(k, t, s).sin_cos();
    let r = lp_radius(sn, cs, p);
    Ok(if is_cos { cs / r } else { sn / r })
}

/// Which period a marginal basis function belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Long period `s1` (annual), the row index `i1` of the indicator.
    Long,
    /// Short period `s2` (diurnal), the column index `i2` of the indicator.
    Short,
}

/// A non-constant marginal basis function, carrying its own exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisKey {
    pub family: Family,
    /// Function index, at least 2.
    pub index: usize,
}

impl BasisKey {
    /// Label in the `p_{i1 i2}` convention of the coefficient tables, where
    /// the marginal function of the long period sits in cell `(i, 1)` and
    /// the one of the short period in cell `(1, i)`.
    pub fn label(&self) -> String {
        match self.family {
            Family::Long => format!("p_{}1", self.index),
            Family::Short => format!("p_1{}", self.index),
        }
    }
}

// JSON object keys must be strings, so the exponent map goes out as a list.
mod exponent_list {
    use super::{BasisKey, Family};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        family: Family,
        index: usize,
        p: f64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<BasisKey, f64>, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<Entry> = map
            .iter()
            .map(|(k, p)| Entry {
                family: k.family,
                index: k.index,
                p: *p,
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<BasisKey, f64>, D::Error> {
        let list = Vec::<Entry>::deserialize(d)?;
        Ok(list
            .into_iter()
            .map(|e| {
                let key = BasisKey {
                    family: e.family,
                    index: e.index,
                };
                (key, e.p)
            })
            .collect())
    }
}

/// Full definition of the deterministic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSpec {
    pub s1: f64,
    pub s2: f64,
    /// `k1 × k2` 0/1 matrix; cell `(0, 0)` is the intercept and must be 0.
    pub indicator: Vec<Vec<u8>>,
    /// One exponent per active marginal function; missing keys default to 2.
    #[serde(with = "exponent_list")]
    pub p_exponents: BTreeMap<BasisKey, f64>,
    pub include_trend: bool,
    /// The trend regressor is `t / t_scale`.
    pub t_scale: f64,
}

impl SeasonalSpec {
    pub fn new(s1: f64, s2: f64, indicator: Vec<Vec<u8>>, include_trend: bool, t_scale: f64) -> Result<Self> {
        let mut spec = Self {
            s1,
            s2,
            indicator,
            p_exponents: BTreeMap::new(),
            include_trend,
            t_scale,
        };
        spec.p_exponents = spec.basis_keys().into_iter().map(|k| (k, 2.0)).collect();
        spec.validate()?;
        Ok(spec)
    }

    /// Year/day periods with the default 5×5 indicator and a trend.
    pub fn default_with_scale(t_scale: f64) -> Self {
        let indicator = DEFAULT_INDICATOR.iter().map(|r| r.to_vec()).collect();
        Self::new(YEAR_STEPS, DAY_STEPS, indicator, true, t_scale).expect("default spec is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s1 > self.s2 && self.s2 > 1.0) {
            return Err(invalid(format!(
                "periods must satisfy s1 > s2 > 1, got s1 = {}, s2 = {}",
                self.s1, self.s2
            )));
        }
        let k2 = self.indicator.first().map_or(0, Vec::len);
        if self.indicator.is_empty() || k2 == 0 {
            return Err(invalid("indicator matrix must be non-empty"));
        }
        if self.indicator.iter().any(|r| r.len() != k2) {
            return Err(invalid("indicator matrix rows differ in length"));
        }
        if self.indicator.iter().flatten().any(|v| *v > 1) {
            return Err(invalid("indicator entries must be 0 or 1"));
        }
        if self.indicator[0][0] != 0 {
            return Err(invalid("indicator cell (1,1) must be 0, the intercept is separate"));
        }
        if !(self.t_scale > 0.0 && self.t_scale.is_finite()) {
            return Err(invalid("t_scale must be positive"));
        }
        for (k, p) in &self.p_exponents {
            check_p(*p).map_err(|_| invalid(format!("{} = {p} is not a positive exponent", k.label())))?;
        }
        Ok(())
    }

    /// Active indicator cells `(i1, i2)`, 1-based, in row-major order.
    pub fn active_cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for (r, row) in self.indicator.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if *v == 1 {
                    cells.push((r + 1, c + 1));
                }
            }
        }
        cells
    }

    /// Marginal functions used by the active cells, sorted (long period
    /// first, then by index).
    pub fn basis_keys(&self) -> Vec<BasisKey> {
        let mut keys: Vec<BasisKey> = self
            .active_cells()
            .into_iter()
            .flat_map(|(i1, i2)| {
                let a = (i1 > 1).then_some(BasisKey {
                    family: Family::Long,
                    index: i1,
                });
                let b = (i2 > 1).then_some(BasisKey {
                    family: Family::Short,
                    index: i2,
                });
                a.into_iter().chain(b)
            })
            .collect();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn p(&self, key: BasisKey) -> f64 {
        self.p_exponents.get(&key).copied().unwrap_or(2.0)
    }

    /// Exponents in [`basis_keys`](Self::basis_keys) order.
    pub fn p_vector(&self) -> Vec<f64> {
        self.basis_keys().into_iter().map(|k| self.p(k)).collect()
    }

    /// Returns a copy with exponents given in [`basis_keys`](Self::basis_keys) order.
    pub fn with_p_vector(&self, ps: &[f64]) -> Result<Self> {
        let keys = self.basis_keys();
        if keys.len() != ps.len() {
            return Err(invalid(format!("expected {} exponents, got {}", keys.len(), ps.len())));
        }
        let mut spec = self.clone();
        spec.p_exponents = keys.into_iter().zip(ps.iter().copied()).collect();
        spec.validate()?;
        Ok(spec)
    }

    /// Copy with every exponent reset to 2.
    pub fn classical(&self) -> Self {
        let mut spec = self.clone();
        for p in spec.p_exponents.values_mut() {
            *p = 2.0;
        }
        spec
    }

    /// Number of regression coefficients: intercept, trend, active cells.
    pub fn regression_len(&self) -> usize {
        1 + usize::from(self.include_trend) + self.active_cells().len()
    }

    /// Coefficient names in regressor order.
    pub fn column_labels(&self) -> Vec<String> {
        let mut labels = vec!["vartheta_11".to_string()];
        if self.include_trend {
            labels.push("vartheta_trend".to_string());
        }
        labels.extend(
            self.active_cells()
                .into_iter()
                .map(|(a, b)| format!("vartheta_{a}{b}")),
        );
        labels
    }

    fn marginal(&self, family: Family, index: usize, t: f64) -> f64 {
        if index == 1 {
            return 1.0;
        }
        let s = match family {
            Family::Long => self.s1,
            Family::Short => self.s2,
        };
        let p = self.p(BasisKey { family, index });
        basis_function(index, s, t, p).expect("validated exponent")
    }
}

/// Regressor values at one time index: intercept, trend (if enabled), then
/// active cells in row-major indicator order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorRow {
    pub values: Vec<f64>,
}

pub fn regressor_row(spec: &SeasonalSpec, t: f64) -> RegressorRow {
    let mut values = Vec::with_capacity(spec.regression_len());
    values.push(1.0);
    if spec.include_trend {
        values.push(t / spec.t_scale);
    }
    for (i1, i2) in spec.active_cells() {
        values.push(spec.marginal(Family::Long, i1, t) * spec.marginal(Family::Short, i2, t));
    }
    RegressorRow { values }
}

/// Stacks [`regressor_row`] for every `t` in the range (one row per time
/// index, columns as in [`SeasonalSpec::column_labels`]).
pub fn design_matrix(spec: &SeasonalSpec, t_range: Range<usize>) -> Result<DMatrix<f64>> {
    if t_range.is_empty() {
        return Err(invalid("design matrix needs a non-empty range"));
    }
    let k = spec.regression_len();
    let rows = t_range.len();
    let mut m = DMatrix::zeros(rows, k);
    for (r, t) in t_range.enumerate() {
        let row = regressor_row(spec, t as f64);
        for (c, v) in row.values.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(m)
}

/// Column-wise regressor evaluation over a fixed time range, caching the
/// raw sines and cosines so that changing one exponent only recomputes the
/// marginal column it belongs to.
#[derive(Debug, Clone)]
pub struct SeasonalColumns {
    t0: usize,
    n: usize,
    include_trend: bool,
    t_scale: f64,
    cells: Vec<(Option<usize>, Option<usize>)>,
    keys: Vec<BasisKey>,
    raw: Vec<(Vec<f64>, Vec<f64>)>,
    is_cos: Vec<bool>,
    cached_p: Vec<f64>,
    columns: Vec<Vec<f64>>,
}

impl SeasonalColumns {
    pub fn new(spec: &SeasonalSpec, t_range: Range<usize>) -> Self {
        let keys = spec.basis_keys();
        let n = t_range.len();
        let position = |family: Family, index: usize| {
            (index > 1).then(|| {
                keys.iter()
                    .position(|k| k.family == family && k.index == index)
                    .expect("key of an active cell")
            })
        };
        let cells = spec
            .active_cells()
            .into_iter()
            .map(|(a, b)| (position(Family::Long, a), position(Family::Short, b)))
            .collect();
        let mut raw = Vec::with_capacity(keys.len());
        let mut is_cos = Vec::with_capacity(keys.len());
        for key in &keys {
            let s = match key.family {
                Family::Long => spec.s1,
                Family::Short => spec.s2,
            };
            let (k, cos) = harmonic(key.index);
            let (sn, cs): (Vec<f64>, Vec<f64>) = t_range
                .clone()
                .map(|t| angle(k, t as f64, s).sin_cos())
                .unzip();
            raw.push((sn, cs));
            is_cos.push(cos);
        }
        let mut out = Self {
            t0: t_range.start,
            n,
            include_trend: spec.include_trend,
            t_scale: spec.t_scale,
            cells,
            cached_p: vec![f64::NAN; keys.len()],
            columns: vec![Vec::new(); keys.len()],
            keys,
            raw,
            is_cos,
        };
        out.update(&spec.p_vector());
        out
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn keys(&self) -> &[BasisKey] {
        &self.keys
    }

    /// Recomputes marginal columns whose exponent changed.
    pub fn update(&mut self, ps: &[f64]) {
        for (j, &p) in ps.iter().enumerate() {
            if self.cached_p[j] == p {
                continue;
            }
            let (sn, cs) = &self.raw[j];
            let col = &mut self.columns[j];
            col.clear();
            let cos = self.is_cos[j];
            col.extend(sn.iter().zip(cs).map(|(&s, &c)| {
                let r = lp_radius(s, c, p);
                if cos {
                    c / r
                } else {
                    s / r
                }
            }));
            self.cached_p[j] = p;
        }
    }

    /// Writes `X θ` into `out` for the current exponents.
    pub fn mean_into(&self, theta: &[f64], out: &mut [f64]) {
        let mut idx = 0;
        let intercept = theta[idx];
        idx += 1;
        out.iter_mut().for_each(|v| *v = intercept);
        if self.include_trend {
            let b = theta[idx] / self.t_scale;
            idx += 1;
            for (i, v) in out.iter_mut().enumerate() {
                *v += b * (self.t0 + i) as f64;
            }
        }
        for (&(a, b), &coef) in self.cells.iter().zip(&theta[idx..]) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    let (ca, cb) = (&self.columns[a], &self.columns[b]);
                    for ((v, x), y) in out.iter_mut().zip(ca).zip(cb) {
                        *v += coef * x * y;
                    }
                }
                (Some(a), None) | (None, Some(a)) => {
                    for (v, x) in out.iter_mut().zip(&self.columns[a]) {
                        *v += coef * x;
                    }
                }
                (None, None) => unreachable!("intercept cell is never active"),
            }
        }
    }

    /// Column `c` of the design matrix (in regressor order).
    pub fn column(&self, c: usize) -> Vec<f64> {
        let mut c = c;
        if c == 0 {
            return vec![1.0; self.n];
        }
        c -= 1;
        if self.include_trend {
            if c == 0 {
                return (0..self.n)
                    .map(|i| (self.t0 + i) as f64 / self.t_scale)
                    .collect();
            }
            c -= 1;
        }
        match self.cells[c] {
            (Some(a), Some(b)) => self.columns[a]
                .iter()
                .zip(&self.columns[b])
                .map(|(x, y)| x * y)
                .collect(),
            (Some(a), None) | (None, Some(a)) => self.columns[a].clone(),
            (None, None) => unreachable!("intercept cell is never active"),
        }
    }

    /// Regressor columns that depend on marginal function `j`.
    pub fn columns_using(&self, j: usize) -> Vec<usize> {
        let offset = 1 + usize::from(self.include_trend);
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, (a, b))| *a == Some(j) || *b == Some(j))
            .map(|(c, _)| c + offset)
            .collect()
    }
}
