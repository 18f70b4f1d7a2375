//! Least-squares start values for the regression and the exponents.

use nalgebra::{DMatrix, DVector};

use crate::error::{data, Error, Result};
use crate::ingestion::WindSeries;
use crate::seasonal::{SeasonalColumns, SeasonalSpec, P_MAX, P_MIN};

use super::optim::brent;
use super::params::ModelKind;

const MAX_SWEEPS: usize = 50;
const SWEEP_TOL: f64 = 1e-6;
const GRID: usize = 15;

/// Normal equations over materialised regressor columns.
struct Normal<'a> {
    y: &'a [f64],
    yy: f64,
    cols: Vec<Vec<f64>>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Normal<'a> {
    fn new(y: &'a [f64], seasonal: &SeasonalColumns, k: usize) -> Self {
        let cols: Vec<Vec<f64>> = (0..k).map(|c| seasonal.column(c)).collect();
        let mut gram = DMatrix::zeros(k, k);
        let mut xty = DVector::zeros(k);
        for i in 0..k {
            xty[i] = dot(&cols[i], y);
            for j in 0..=i {
                let v = dot(&cols[i], &cols[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        Self {
            y,
            yy: dot(y, y),
            cols,
            gram,
            xty,
        }
    }

    fn refresh(&mut self, seasonal: &SeasonalColumns, changed: &[usize]) {
        for &c in changed {
            self.cols[c] = seasonal.column(c);
        }
        for &c in changed {
            self.xty[c] = dot(&self.cols[c], self.y);
            for j in 0..self.cols.len() {
                let v = dot(&self.cols[c], &self.cols[j]);
                self.gram[(c, j)] = v;
                self.gram[(j, c)] = v;
            }
        }
    }

    /// OLS coefficients and residual sum of squares.
    fn solve(&self) -> Result<(Vec<f64>, f64)> {
        // column scaling keeps the Cholesky factorisation well conditioned
        let k = self.cols.len();
        let scale: Vec<f64> = (0..k).map(|i| self.gram[(i, i)].sqrt().max(f64::MIN_POSITIVE)).collect();
        let g = DMatrix::from_fn(k, k, |i, j| self.gram[(i, j)] / (scale[i] * scale[j]));
        let b = DVector::from_fn(k, |i, _| self.xty[i] / scale[i]);
        let chol = g.cholesky().ok_or(Error::LinearAlgebra("design matrix is rank deficient"))?;
        let diag_min = (0..k).map(|i| chol.l()[(i, i)]).fold(f64::INFINITY, f64::min);
        if !(diag_min > 1e-7) {
            return Err(Error::LinearAlgebra("design matrix is rank deficient"));
        }
        let z = chol.solve(&b);
        let theta: Vec<f64> = (0..k).map(|i| z[i] / scale[i]).collect();
        let rss = (self.yy - dot(&theta, self.xty.as_slice())).max(0.0);
        Ok((theta, rss))
    }

    /// Coefficients by Householder QR of the design matrix itself, which
    /// avoids squaring its condition number.
    fn solve_qr(&self) -> Result<Vec<f64>> {
        let n = self.y.len();
        let k = self.cols.len();
        let x = DMatrix::from_fn(n, k, |i, j| self.cols[j][i]);
        let qr = x.qr();
        let r = qr.r();
        let rmax = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        if (0..k).any(|i| !(r[(i, i)].abs() > 1e-10 * rmax)) {
            return Err(Error::LinearAlgebra("design matrix is rank deficient"));
        }
        let qty = qr.q().transpose() * DVector::from_column_slice(self.y);
        let theta = r
            .solve_upper_triangular(&qty)
            .ok_or(Error::LinearAlgebra("design matrix is rank deficient"))?;
        Ok(theta.as_slice().to_vec())
    }

    fn exact_rss(&self, theta: &[f64]) -> f64 {
        let mut fitted = vec![0.0; self.y.len()];
        for (col, b) in self.cols.iter().zip(theta) {
            for (f, x) in fitted.iter_mut().zip(col) {
                *f += b * x;
            }
        }
        self.y.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum()
    }
}

/// Regression coefficients (and exponents for the p-generalised model) by
/// least squares. For [`ModelKind::Pgen`] the exponents are found by
/// coordinate-wise minimisation of the residual sum of squares (grid scan
/// plus Brent refinement on `log p`), alternated with OLS for the
/// coefficients until the relative change falls below `1e-6`.
pub fn stage1_start_values(series: &WindSeries, spec: &SeasonalSpec, model: ModelKind) -> Result<(Vec<f64>, Vec<f64>)> {
    let y = &series.values;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(data("series contains missing values; interpolate gaps first"));
    }
    let spec = match model {
        ModelKind::Fourier => spec.classical(),
        ModelKind::Pgen => spec.clone(),
    };
    let k = spec.regression_len();
    let n_free = k + if model == ModelKind::Pgen { spec.basis_keys().len() } else { 0 };
    if y.len() < 10 * n_free {
        return Err(data(format!(
            "{} observations are too few for {n_free} regression parameters",
            y.len()
        )));
    }
    let mut seasonal = SeasonalColumns::new(&spec, 0..y.len());
    let mut normal = Normal::new(y, &seasonal, k);
    let (_, mut rss) = normal.solve()?;
    let mut ps = spec.p_vector();
    if model == ModelKind::Fourier || ps.is_empty() {
        return Ok((normal.solve_qr()?, ps));
    }
    let (lo, hi) = ((P_MIN * 1.0001).ln(), P_MAX.ln());
    for sweep in 0..MAX_SWEEPS {
        let before = rss;
        for j in 0..ps.len() {
            let changed = seasonal.columns_using(j);
            let mut eval = |lp: f64| -> f64 {
                let mut trial = ps.clone();
                trial[j] = lp.exp().clamp(P_MIN * 1.0001, P_MAX);
                seasonal.update(&trial);
                normal.refresh(&seasonal, &changed);
                normal.solve().map_or(f64::INFINITY, |(_, r)| r)
            };
            let grid: Vec<f64> = (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect();
            let values: Vec<f64> = grid.iter().map(|&g| eval(g)).collect();
            let best = (0..GRID).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("grid");
            let (a, b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(GRID - 1)]);
            let (x, fx) = brent(&mut eval, a, b, 1e-6, 100);
            let current = eval(ps[j].ln());
            if fx < current {
                ps[j] = x.exp().clamp(P_MIN * 1.0001, P_MAX);
            }
            seasonal.update(&ps);
            normal.refresh(&seasonal, &changed);
        }
        rss = normal.solve()?.1;
        log::debug!("stage 1 sweep {sweep}: rss {rss}, p {ps:?}");
        if (before - rss).abs() <= SWEEP_TOL * before.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let theta = normal.solve_qr()?;
    log::debug!("stage 1 final rss {}", normal.exact_rss(&theta));
    Ok((theta, ps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seasonal::design_matrix;
    use chrono::DateTime;

    #[test]
    fn exact_linear_recovery() {
        let spec = SeasonalSpec::default_with_scale(20_000.0);
        let m = design_matrix(&spec, 0..20_000).unwrap();
        let mut truth: Vec<f64> = (0..14).map(|i| 0.3 * (i as f64 - 6.0)).collect();
        truth[0] = 10.0;
        let y = &m * DVector::from_vec(truth.clone());
        let series = WindSeries::new(DateTime::UNIX_EPOCH, y.as_slice().to_vec()).unwrap();
        let (theta, ps) = stage1_start_values(&series, &spec, ModelKind::Fourier).unwrap();
        assert_eq!(ps, vec![2.0; 8]);
        for (a, b) in theta.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_series() {
        let spec = SeasonalSpec::default_with_scale(5000.0);
        let series = WindSeries::new(DateTime::UNIX_EPOCH, vec![3.7; 5000]).unwrap();
        let (theta, _) = stage1_start_values(&series, &spec, ModelKind::Pgen).unwrap();
        assert!((theta[0] - 3.7).abs() < 1e-9);
        assert!(theta[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn too_short() {
        let spec = SeasonalSpec::default_with_scale(50.0);
        let series = WindSeries::new(DateTime::UNIX_EPOCH, vec![1.0; 50]).unwrap();
        assert!(stage1_start_values(&series, &spec, ModelKind::Fourier).is_err());
    }
}
