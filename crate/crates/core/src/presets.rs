//! Published parameter sets for the classical model at four Brandenburg
//! stations, usable as simulation truth.

use crate::aparch::{AparchParams, SkewTParams};
use crate::arfima::{ArfimaParams, DEFAULT_TRUNCATION};
use crate::estimation::ModelParams;
use crate::seasonal::SeasonalSpec;

/// One station's estimates. Regression coefficients are keyed by
/// indicator cell; the trend is per 10-minute step.
#[derive(Debug, Clone, Copy)]
pub struct StationPreset {
    pub name: &'static str,
    pub theta: [(&'static str, f64); 13],
    pub trend: f64,
    pub d: f64,
    pub ar: [f64; 2],
    pub ma: f64,
    pub alpha0: f64,
    pub alpha: f64,
    pub beta: [f64; 2],
    pub gamma: f64,
    pub delta: f64,
    pub xi: f64,
    pub nu: f64,
}

const CELLS: [&str; 13] = ["11", "12", "13", "14", "15", "21", "22", "23", "31", "32", "33", "41", "51"];

const fn cells(v: [f64; 13]) -> [(&'static str, f64); 13] {
    let mut out = [("", 0.0); 13];
    let mut i = 0;
    while i < 13 {
        out[i] = (CELLS[i], v[i]);
        i += 1;
    }
    out
}

pub const MANSCHNOW: StationPreset = StationPreset {
    name: "manschnow",
    theta: cells([
        3.2941, -0.5588, -0.3730, 0.0752, 0.2098, 0.0451, 0.0531, 0.1079, 0.6339, 0.4127, 0.2368, -0.0628, -0.1060,
    ]),
    trend: -0.0000025,
    d: 0.4310,
    ar: [1.2334, -0.2698],
    ma: -0.8065,
    alpha0: 0.0012,
    alpha: 0.1426,
    beta: [0.5257, 0.3645],
    gamma: -0.1208,
    delta: 0.9325,
    xi: 1.0672,
    nu: 7.8622,
};

pub const LINDENBERG: StationPreset = StationPreset {
    name: "lindenberg",
    theta: cells([
        4.0346, -0.1456, -0.1107, 0.0313, 0.1089, -0.2839, 0.0057, -0.0334, 0.4167, 0.0656, 0.1021, -0.0418, -0.1549,
    ]),
    trend: -0.0000040,
    d: 0.00003,
    ar: [1.4033, -0.4104],
    ma: -0.6186,
    alpha0: 0.0091,
    alpha: 0.1346,
    beta: [0.7160, 0.1618],
    gamma: -0.2860,
    delta: 0.9529,
    xi: 1.0512,
    nu: 9.2202,
};

pub const ANGERMUENDE: StationPreset = StationPreset {
    name: "angermuende",
    theta: cells([
        4.1071, -0.5420, -0.4179, 0.0743, 0.2144, -0.3678, -0.0888, 0.0831, 0.5400, 0.3795, 0.3114, 0.0166, -0.1123,
    ]),
    trend: -0.0000027,
    d: 0.0913,
    ar: [1.5345, -0.5412],
    ma: -0.7650,
    alpha0: 0.0188,
    alpha: 0.1254,
    beta: [0.5523, 0.3015],
    gamma: -0.1947,
    delta: 1.3877,
    xi: 1.0534,
    nu: 8.8646,
};

pub const GRUENOW: StationPreset = StationPreset {
    name: "gruenow",
    theta: cells([
        4.6358, -0.5464, -0.4529, 0.1005, 0.1938, -0.1986, -0.1646, -0.0139, 0.6472, 0.3441, 0.2975, 0.1447, -0.2368,
    ]),
    trend: -0.0000028,
    d: 0.2323,
    ar: [1.4446, -0.4562],
    ma: -0.7826,
    alpha0: 0.0019,
    alpha: 0.1580,
    beta: [0.5526, 0.3252],
    gamma: -0.1103,
    delta: 1.0750,
    xi: 1.0160,
    nu: 7.3534,
};

pub const STATIONS: [StationPreset; 4] = [MANSCHNOW, LINDENBERG, ANGERMUENDE, GRUENOW];

impl StationPreset {
    /// The estimates placed on `spec`. Cells without a published
    /// coefficient get 0; the trend coefficient is rescaled to the
    /// regressor `t / spec.t_scale`.
    pub fn params(&self, spec: &SeasonalSpec) -> ModelParams {
        let theta = spec
            .column_labels()
            .iter()
            .map(|l| {
                if l == "vartheta_trend" {
                    return self.trend * spec.t_scale;
                }
                let cell = l.trim_start_matches("vartheta_");
                self.theta.iter().find(|(c, _)| *c == cell).map_or(0.0, |(_, v)| *v)
            })
            .collect();
        ModelParams {
            theta,
            p_exponents: spec.p_vector(),
            arfima: ArfimaParams::new(self.d, self.ar.to_vec(), vec![self.ma], DEFAULT_TRUNCATION).expect("valid preset"),
            aparch: AparchParams::new(self.alpha0, vec![self.alpha], self.beta.to_vec(), vec![self.gamma], self.delta)
                .expect("valid preset"),
            skewt: SkewTParams::new(self.xi, self.nu).expect("valid preset"),
        }
    }
}

/// Preset by station name (case-insensitive, `ue` or `ü`).
pub fn station(name: &str) -> Option<StationPreset> {
    let key = name.to_lowercase().replace('ü', "ue");
    STATIONS.into_iter().find(|s| s.name == key)
}

pub fn manschnow(spec: &SeasonalSpec) -> ModelParams {
    MANSCHNOW.params(spec)
}

pub fn lindenberg(spec: &SeasonalSpec) -> ModelParams {
    LINDENBERG.params(spec)
}
