//! Start values: the ARFIMA block by conditional sum of squares on the
//! stage-1 residuals, and regression coefficients by filtered least
//! squares.
//!
//! The joint likelihood of a near-unit-root AR polynomial with long memory
//! has competing modes (an AR root and an MA root can almost cancel), so a
//! single neutral start is not enough. The Gaussian CSS objective is cheap
//! and shares the mean-dynamics modes, so it is searched from a grid of
//! starts and the best solution seeds the full fit. Bursts of high scale
//! dominate plain sums of squares, so a second pass reweights the squares by
//! an exponentially smoothed scale of the first-pass innovations.

use nalgebra::{DMatrix, DVector};

use super::optim::{bfgs, BfgsOptions};
use super::params::{d_from_u, d_to_u};
use crate::arfima::{filter_to_innovations, pacf_to_coeffs, ArfimaParams};
use crate::seasonal::SeasonalColumns;

const D_GRID: [f64; 4] = [0.0, 0.15, 0.3, 0.45];
const AR_GRID: [f64; 4] = [0.0, 0.5, 0.9, 0.97];
const MA_GRID: [f64; 3] = [-0.5, 0.0, 0.5];
/// Local searches started from the best grid points.
const REFINE: usize = 3;

fn decode(u: &[f64], ar: usize, truncation: usize) -> ArfimaParams {
    let tanh = |v: &[f64]| v.iter().map(|x| x.tanh()).collect::<Vec<_>>();
    ArfimaParams {
        d: d_from_u(u[0]),
        ar: pacf_to_coeffs(&tanh(&u[1..1 + ar])),
        ma: pacf_to_coeffs(&tanh(&u[1 + ar..])).into_iter().map(|x| -x).collect(),
        truncation,
    }
}

/// Largest |d| handed on as a start value.
const MAX_START_D: f64 = 0.45;

/// Smoothing weight of the scale proxy.
const EWMA: f64 = 0.94;

fn objective(eps: &[f64], weights: Option<&[f64]>, params: &ArfimaParams) -> f64 {
    let z = filter_to_innovations(eps, params);
    let ss = match weights {
        Some(w) => z.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>(),
        None => z.iter().map(|v| v * v).sum::<f64>(),
    } / z.len() as f64;
    if ss.is_finite() && ss > 0.0 {
        ss.ln()
    } else {
        f64::INFINITY
    }
}

/// Inverse squared EWMA scale, each value using innovations before `t` only.
fn scale_weights(z: &[f64]) -> Vec<f64> {
    let mut s2 = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    let floor = 1e-8 * s2;
    z.iter()
        .map(|v| {
            let w = 1.0 / s2.max(floor);
            s2 = EWMA * s2 + (1.0 - EWMA) * v * v;
            w
        })
        .collect()
}

fn grid(ar: usize, ma: usize) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let ar_grid: &[f64] = if ar > 0 { &AR_GRID } else { &[0.0] };
    let ma_grid: &[f64] = if ma > 0 { &MA_GRID } else { &[0.0] };
    for d in D_GRID {
        for r in ar_grid {
            for m in ma_grid {
                let mut u = vec![d_to_u(d)];
                u.extend((0..ar).map(|i| if i == 0 { r.atanh() } else { 0.0 }));
                u.extend((0..ma).map(|i| if i == 0 { m.atanh() } else { 0.0 }));
                starts.push(u);
            }
        }
    }
    starts
}

fn search(eps: &[f64], weights: Option<&[f64]>, starts: Vec<Vec<f64>>, ar: usize, truncation: usize) -> (f64, Vec<f64>) {
    let f = |u: &[f64]| objective(eps, weights, &decode(u, ar, truncation));
    let mut scored: Vec<(f64, Vec<f64>)> = starts.into_iter().map(|u| (f(&u), u)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let opts = BfgsOptions {
        max_iter: 200,
        rel_tol: 1e-7,
        ..Default::default()
    };
    let best = scored
        .iter()
        .take(REFINE)
        .map(|(_, u)| bfgs(f, u, &opts))
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .expect("non-empty grid");
    (best.f, best.x)
}

/// ARFIMA parameters minimising the (scale-weighted) innovation variance
/// of `eps`.
pub(crate) fn css_start(eps: &[f64], ar: usize, ma: usize, truncation: usize) -> ArfimaParams {
    let (f1, u1) = search(eps, None, grid(ar, ma), ar, truncation);
    let weights = scale_weights(&filter_to_innovations(eps, &decode(&u1, ar, truncation)));
    let mut starts = grid(ar, ma);
    starts.push(u1);
    let (f2, u2) = search(eps, Some(&weights), starts, ar, truncation);
    log::debug!("CSS start values: plain {f1:.6}, weighted {f2:.6}");
    let mut start = decode(&u2, ar, truncation);
    // Near the stationarity bound the d map is flat and the joint search
    // cannot leave it.
    start.d = start.d.clamp(-MAX_START_D, MAX_START_D);
    start
}

/// Regression coefficients by weighted least squares on the filtered
/// series: the truncated filter is linear, so with the scale path held
/// fixed the innovations are `F(w)/σ - Σ θ_c F(x_c)/σ`. Under strong
/// memory this is far better than ordinary least squares, which cannot
/// tell slow seasonal columns from a wandering level.
pub(crate) fn gls_theta(w: &[f64], columns: &SeasonalColumns, k: usize, arfima: &ArfimaParams, sigma: &[f64]) -> Option<Vec<f64>> {
    let n = w.len();
    let weigh = |x: &[f64]| -> Vec<f64> {
        filter_to_innovations(x, arfima).iter().zip(sigma).map(|(v, s)| v / s).collect()
    };
    let y = DVector::from_vec(weigh(w));
    let mut x = DMatrix::zeros(n, k);
    for c in 0..k {
        x.set_column(c, &DVector::from_vec(weigh(&columns.column(c))));
    }
    let qr = x.qr();
    let r = qr.r();
    let rmax = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| !(r[(i, i)].abs() > 1e-10 * rmax)) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    let theta = r.solve_upper_triangular(&qty)?;
    theta.iter().all(|v| v.is_finite()).then(|| theta.as_slice().to_vec())
}
