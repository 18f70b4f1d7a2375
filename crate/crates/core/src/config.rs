//! Run configuration in a flat `key = value` text format.
//!
//! Keys carry a section prefix, either written out (`backtest.horizon = 18`)
//! or set by a `[backtest]` header line. `#` starts a comment. Unknown keys
//! are rejected.
//!
//! ```text
//! [data]
//! paths = stations/manschnow.csv
//! speed_column = FF_10
//!
//! [model]
//! kinds = fourier, pgen
//! orders = 2,1,1,2
//!
//! [split]
//! boundary = 2014-01-01T00:00:00Z
//!
//! [backtest]
//! horizon = 18
//! origins = 5000
//! taus = 0.25, 0.5, 0.75
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{FitOptions, ModelKind, Orders};
use crate::evaluation::{BacktestSettings, Origins, PowerCurve};
use crate::forecast::DEFAULT_WINDOW;
use crate::ingestion::{parse_timestamp, CsvFormat, SampleSplit, WindSeries, DEFAULT_MAX_GAP};
use crate::seasonal::{BasisKey, Family, SeasonalSpec, DAY_STEPS, YEAR_STEPS};
use crate::spectral::DEFAULT_BANDWIDTH;

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Raw key-value pairs with the line each came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_ascii_lowercase();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg(format!("line {line_no}: expected `key = value`, got `{line}`")))?;
            let k = k.trim().to_ascii_lowercase();
            if k.is_empty() {
                return Err(cfg(format!("line {line_no}: empty key")));
            }
            let key = if section.is_empty() || k.contains('.') {
                k
            } else {
                format!("{section}.{k}")
            };
            if entries.insert(key.clone(), (line_no, v.trim().to_string())).is_some() {
                return Err(cfg(format!("line {line_no}: `{key}` is set twice")));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_ascii_lowercase(), (0, value.into()));
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| cfg(format!("line {line}: `{key}` has invalid value `{v}`"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, sep: char) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(sep)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| cfg(format!("line {line}: `{key}` entry `{s}` is invalid"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// Where the in-sample period ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    Boundary(DateTime<Utc>),
    Index(usize),
    /// Share of points in sample.
    Fraction(f64),
}

impl SplitRule {
    pub fn apply(&self, series: &WindSeries) -> Result<SampleSplit> {
        match *self {
            SplitRule::Boundary(ts) => crate::ingestion::split(series, ts),
            SplitRule::Index(i) => SampleSplit::at_index(series.len(), i),
            SplitRule::Fraction(f) => SampleSplit::at_index(series.len(), (f * series.len() as f64).round() as usize),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Spectrum,
    Fit,
    Evaluate,
    Diagnose,
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spectrum" => Ok(Stage::Spectrum),
            "fit" => Ok(Stage::Fit),
            "evaluate" => Ok(Stage::Evaluate),
            "diagnose" => Ok(Stage::Diagnose),
            other => Err(cfg(format!("unknown stage `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSettings {
    pub bandwidth: usize,
    pub max_period: f64,
    pub top_k: usize,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        Self {
            bandwidth: DEFAULT_BANDWIDTH,
            max_period: 60_000.0,
            top_k: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSettings {
    pub acf_lags: usize,
    pub ljung_box_lags: Vec<usize>,
}

impl Default for DiagnosticSettings {
    fn default() -> Self {
        Self {
            acf_lags: 100,
            ljung_box_lags: vec![5, 10, 15, 20],
        }
    }
}

/// Everything a pipeline run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub stations: Vec<PathBuf>,
    pub csv: CsvFormat,
    pub max_gap: usize,
    /// `t_scale` is replaced by the in-sample length unless
    /// `fixed_t_scale` is set.
    pub spec: SeasonalSpec,
    pub fixed_t_scale: bool,
    pub models: Vec<ModelKind>,
    /// One entry fits those orders; several run a BIC selection.
    pub orders: Vec<Orders>,
    pub fit: FitOptions,
    /// Stop with a convergence error when a fit does not converge.
    pub require_convergence: bool,
    pub split: SplitRule,
    pub backtest: BacktestSettings,
    /// Trailing information window at each forecast origin.
    pub window: usize,
    pub persistence: bool,
    pub spectrum: SpectrumSettings,
    pub diagnostics: DiagnosticSettings,
    pub output_dir: PathBuf,
    pub stages: Vec<Stage>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stations: Vec::new(),
            csv: CsvFormat::default(),
            max_gap: DEFAULT_MAX_GAP,
            spec: SeasonalSpec::default_with_scale(1.0),
            fixed_t_scale: false,
            models: vec![ModelKind::Fourier, ModelKind::Pgen],
            orders: vec![Orders::default()],
            fit: FitOptions::default(),
            require_convergence: true,
            split: SplitRule::Fraction(0.8),
            backtest: BacktestSettings::default(),
            window: DEFAULT_WINDOW,
            persistence: true,
            spectrum: SpectrumSettings::default(),
            diagnostics: DiagnosticSettings::default(),
            output_dir: PathBuf::from("output"),
            stages: vec![Stage::Spectrum, Stage::Fit, Stage::Evaluate, Stage::Diagnose],
        }
    }
}

const KEYS: &[&str] = &[
    "data.paths",
    "data.timestamp_column",
    "data.speed_column",
    "data.missing_sentinel",
    "data.max_gap",
    "seasonal.s1",
    "seasonal.s2",
    "seasonal.indicator",
    "seasonal.trend",
    "seasonal.t_scale",
    "model.kinds",
    "model.orders",
    "model.truncation",
    "model.max_iter",
    "model.rel_tol",
    "model.scale_floor",
    "model.std_errors",
    "model.require_convergence",
    "split.boundary",
    "split.index",
    "split.fraction",
    "backtest.horizon",
    "backtest.origins",
    "backtest.seed",
    "backtest.taus",
    "backtest.all_steps",
    "backtest.window",
    "backtest.persistence",
    "curve.name",
    "curve.cut_in",
    "curve.rated_speed",
    "curve.cut_out",
    "curve.rated_power",
    "curve.rho",
    "curve.rotor_diameter",
    "spectrum.bandwidth",
    "spectrum.max_period",
    "spectrum.top_k",
    "diagnostics.acf_lags",
    "diagnostics.ljung_box_lags",
    "output.dir",
    "run.stages",
];

/// Keys `seasonal.p_<a><b>` set starting exponents, e.g. `seasonal.p_12`.
fn p_key(key: &str) -> Option<BasisKey> {
    let cell = key.strip_prefix("seasonal.p_")?;
    let (a, b) = cell.split_at(cell.len().checked_sub(1)?);
    let (a, b): (usize, usize) = (a.parse().ok()?, b.parse().ok()?);
    match (a, b) {
        (1, i) if i >= 2 => Some(BasisKey {
            family: Family::Short,
            index: i,
        }),
        (i, 1) if i >= 2 => Some(BasisKey {
            family: Family::Long,
            index: i,
        }),
        _ => None,
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(cfg(format!("`{key}` must be true or false, got `{v}`"))),
    }
}

/// Indicator rows separated by `;` or `/`, e.g. `01111;11100;…`.
pub fn parse_indicator(v: &str) -> Result<Vec<Vec<u8>>> {
    v.split([';', '/'])
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|row| {
            row.chars()
                .filter(|c| !c.is_whitespace() && *c != ',')
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(cfg(format!("indicator row `{row}` may only contain 0 and 1"))),
                })
                .collect()
        })
        .collect()
}

/// The seasonal part of a config file for `spec`.
pub fn seasonal_to_config(spec: &SeasonalSpec) -> String {
    let mut out = String::from("[seasonal]\n");
    writeln!(out, "s1 = {}", spec.s1).expect("string write");
    writeln!(out, "s2 = {}", spec.s2).expect("string write");
    let rows: Vec<String> = spec
        .indicator
        .iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect();
    writeln!(out, "indicator = {}", rows.join(";")).expect("string write");
    writeln!(out, "trend = {}", spec.include_trend).expect("string write");
    writeln!(out, "t_scale = {}", spec.t_scale).expect("string write");
    for (k, p) in &spec.p_exponents {
        writeln!(out, "{} = {p}", k.label()).expect("string write");
    }
    out
}

/// Seasonal specification from `seasonal.*` keys; absent keys take the
/// defaults (year and day periods, 5×5 indicator, trend).
pub fn seasonal_from_config(map: &ConfigMap) -> Result<SeasonalSpec> {
    let base = SeasonalSpec::default_with_scale(1.0);
    let s1 = map.typed("seasonal.s1")?.unwrap_or(YEAR_STEPS);
    let s2 = map.typed("seasonal.s2")?.unwrap_or(DAY_STEPS);
    let indicator = match map.get("seasonal.indicator") {
        Some(v) => parse_indicator(v)?,
        None => base.indicator.clone(),
    };
    let trend = match map.get("seasonal.trend") {
        Some(v) => parse_bool("seasonal.trend", v)?,
        None => true,
    };
    let t_scale = map.typed("seasonal.t_scale")?.unwrap_or(1.0);
    let mut spec = SeasonalSpec::new(s1, s2, indicator, trend, t_scale).map_err(|e| cfg(e.to_string()))?;
    let keys = spec.basis_keys();
    for key in map.keys().filter(|k| k.starts_with("seasonal.p_")) {
        let bk = p_key(key).ok_or_else(|| cfg(format!("`{key}` does not name a basis function")))?;
        if !keys.contains(&bk) {
            return Err(cfg(format!("`{key}` refers to a basis function the indicator does not use")));
        }
        let p: f64 = map.typed(key)?.expect("key present");
        spec.p_exponents.insert(bk, p);
    }
    spec.validate().map_err(|e| cfg(e.to_string()))?;
    Ok(spec)
}

fn curve_from_config(map: &ConfigMap) -> Result<PowerCurve> {
    let base = match map.get("curve.name").map(str::to_ascii_lowercase).as_deref() {
        None | Some("md77") => PowerCurve::md77(),
        Some("ge16") => PowerCurve::ge16(),
        Some(other) => return Err(cfg(format!("unknown power curve `{other}`, expected md77 or ge16"))),
    };
    let diameter = 2.0 * (base.rotor_area / std::f64::consts::PI).sqrt();
    PowerCurve::new(
        map.typed("curve.cut_in")?.unwrap_or(base.cut_in),
        map.typed("curve.rated_speed")?.unwrap_or(base.rated_speed),
        map.typed("curve.cut_out")?.unwrap_or(base.cut_out),
        map.typed("curve.rated_power")?.unwrap_or(base.rated_power),
        map.typed("curve.rho")?.unwrap_or(base.rho),
        map.typed("curve.rotor_diameter")?.unwrap_or(diameter),
    )
    .map_err(|e| cfg(e.to_string()))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let map = ConfigMap::from_file(path)?;
        let mut config = Self::from_map(&map)?;
        // data and output paths are relative to the config file
        if let Some(dir) = path.parent() {
            for p in config.stations.iter_mut().filter(|p| p.is_relative()) {
                *p = dir.join(&*p);
            }
            if config.output_dir.is_relative() {
                config.output_dir = dir.join(&config.output_dir);
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&ConfigMap::parse(text)?)
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        for key in map.keys() {
            if !KEYS.contains(&key) && !key.starts_with("seasonal.p_") {
                return Err(cfg(format!("unknown key `{key}`")));
            }
        }
        let mut c = Self::default();
        if let Some(paths) = map.list::<String>("data.paths", ',')? {
            c.stations = paths.into_iter().map(PathBuf::from).collect();
        }
        if let Some(v) = map.get("data.timestamp_column") {
            c.csv.timestamp_column = v.to_string();
        }
        if let Some(v) = map.get("data.speed_column") {
            c.csv.speed_column = v.to_string();
        }
        if let Some(v) = map.get("data.missing_sentinel") {
            c.csv.missing_sentinel = if v.eq_ignore_ascii_case("none") {
                None
            } else {
                Some(map.typed("data.missing_sentinel")?.expect("key present"))
            };
        }
        c.max_gap = map.typed("data.max_gap")?.unwrap_or(c.max_gap);
        c.spec = seasonal_from_config(map)?;
        c.fixed_t_scale = map.get("seasonal.t_scale").is_some();
        if let Some(kinds) = map.list::<String>("model.kinds", ',')? {
            c.models = kinds
                .iter()
                .map(|k| k.parse().map_err(|e: Error| cfg(e.to_string())))
                .collect::<Result<_>>()?;
        }
        if let Some(orders) = map.list::<String>("model.orders", ';')? {
            c.orders = orders
                .iter()
                .map(|o| o.parse().map_err(|e: Error| cfg(e.to_string())))
                .collect::<Result<_>>()?;
        }
        c.fit.truncation = map.typed("model.truncation")?.unwrap_or(c.fit.truncation);
        c.fit.max_iter = map.typed("model.max_iter")?.unwrap_or(c.fit.max_iter);
        c.fit.rel_tol = map.typed("model.rel_tol")?.unwrap_or(c.fit.rel_tol);
        c.fit.scale_floor = map.typed("model.scale_floor")?.unwrap_or(c.fit.scale_floor);
        if let Some(v) = map.get("model.std_errors") {
            c.fit.std_errors = parse_bool("model.std_errors", v)?;
        }
        if let Some(v) = map.get("model.require_convergence") {
            c.require_convergence = parse_bool("model.require_convergence", v)?;
        }
        let splits = [
            map.get("split.boundary").is_some(),
            map.get("split.index").is_some(),
            map.get("split.fraction").is_some(),
        ];
        if splits.iter().filter(|s| **s).count() > 1 {
            return Err(cfg("set only one of split.boundary, split.index, split.fraction"));
        }
        if let Some(v) = map.get("split.boundary") {
            c.split = SplitRule::Boundary(
                parse_timestamp(v).ok_or_else(|| cfg(format!("split.boundary `{v}` is not a timestamp")))?,
            );
        }
        if let Some(i) = map.typed("split.index")? {
            c.split = SplitRule::Index(i);
        }
        if let Some(f) = map.typed("split.fraction")? {
            c.split = SplitRule::Fraction(f);
        }
        c.backtest.horizon = map.typed("backtest.horizon")?.unwrap_or(c.backtest.horizon);
        if let Some(v) = map.get("backtest.origins") {
            c.backtest.origins = if v.eq_ignore_ascii_case("all") {
                Origins::All
            } else {
                Origins::Random(map.typed("backtest.origins")?.expect("key present"))
            };
        }
        c.backtest.seed = map.typed("backtest.seed")?.unwrap_or(c.backtest.seed);
        if let Some(taus) = map.list("backtest.taus", ',')? {
            c.backtest.taus = taus;
        }
        if let Some(v) = map.get("backtest.all_steps") {
            c.backtest.all_steps = parse_bool("backtest.all_steps", v)?;
        }
        c.window = map.typed("backtest.window")?.unwrap_or(c.window);
        if let Some(v) = map.get("backtest.persistence") {
            c.persistence = parse_bool("backtest.persistence", v)?;
        }
        c.backtest.curve = curve_from_config(map)?;
        c.spectrum.bandwidth = map.typed("spectrum.bandwidth")?.unwrap_or(c.spectrum.bandwidth);
        c.spectrum.max_period = map.typed("spectrum.max_period")?.unwrap_or(c.spectrum.max_period);
        c.spectrum.top_k = map.typed("spectrum.top_k")?.unwrap_or(c.spectrum.top_k);
        c.diagnostics.acf_lags = map.typed("diagnostics.acf_lags")?.unwrap_or(c.diagnostics.acf_lags);
        if let Some(l) = map.list("diagnostics.ljung_box_lags", ',')? {
            c.diagnostics.ljung_box_lags = l;
        }
        if let Some(v) = map.get("output.dir") {
            c.output_dir = PathBuf::from(v);
        }
        if let Some(stages) = map.list("run.stages", ',')? {
            c.stages = stages;
        }
        c.validate()?;
        Ok(c)
    }

    /// Checks every setting that can be checked without data.
    pub fn validate(&self) -> Result<()> {
        let b = &self.backtest;
        if b.taus.is_empty() {
            return Err(cfg("backtest.taus must not be empty"));
        }
        if let Some(t) = b.taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(cfg(format!("tau = {t} is outside [0, 1]")));
        }
        if b.horizon == 0 {
            return Err(cfg("backtest.horizon must be at least 1"));
        }
        if b.origins == Origins::Random(0) {
            return Err(cfg("backtest.origins must be at least 1"));
        }
        if self.window == 0 {
            return Err(cfg("backtest.window must be positive"));
        }
        if self.models.is_empty() {
            return Err(cfg("model.kinds must name at least one model"));
        }
        if self.orders.is_empty() {
            return Err(cfg("model.orders must not be empty"));
        }
        if self.fit.truncation == 0 {
            return Err(cfg("model.truncation must be positive"));
        }
        if !(self.fit.rel_tol > 0.0) {
            return Err(cfg("model.rel_tol must be positive"));
        }
        if !(self.fit.scale_floor >= 0.0) {
            return Err(cfg("model.scale_floor must be non-negative"));
        }
        if let SplitRule::Fraction(f) = self.split {
            if !(f > 0.0 && f < 1.0) {
                return Err(cfg(format!("split.fraction = {f} must lie strictly between 0 and 1")));
            }
        }
        if self.spectrum.bandwidth % 2 == 0 {
            return Err(cfg("spectrum.bandwidth must be odd"));
        }
        if self.diagnostics.ljung_box_lags.is_empty() {
            return Err(cfg("diagnostics.ljung_box_lags must not be empty"));
        }
        if self.stages.is_empty() {
            return Err(cfg("run.stages must not be empty"));
        }
        Ok(())
    }

    pub fn wants(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }
}
