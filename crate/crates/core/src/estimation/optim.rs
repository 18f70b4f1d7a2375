//! Quasi-Newton minimisation with finite-difference derivatives, and Brent's
//! one-dimensional minimiser.
//!
//! Objectives return `f64::INFINITY` (or NaN) for inadmissible points; line
//! searches treat such values as rejections and backtrack.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when `|f_k - f_{k+1}| / max(|f_k|, 1)` stays below this for two
    /// consecutive iterations.
    pub rel_tol: f64,
    /// Stop immediately when the gradient max-norm falls below this.
    pub grad_tol: f64,
    /// Largest allowed coordinate change per iteration.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            rel_tol: 1e-8,
            grad_tol: 1e-7,
            max_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn step_for(x: f64, h: f64) -> f64 {
    h * x.abs().max(1.0)
}

/// Forward-difference gradient, reusing the known `f(x)`.
pub fn forward_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], fx: f64, h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let hi = step_for(x[i], h);
            xp[i] = x[i] + hi;
            let fp = f(&xp);
            xp[i] = x[i];
            if fp.is_finite() {
                (fp - fx) / hi
            } else {
                // step into a rejection region: fall back to the other side
                xp[i] = x[i] - hi;
                let fm = f(&xp);
                xp[i] = x[i];
                (fx - fm) / hi
            }
        })
        .collect()
}

/// Central-difference gradient.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let hi = step_for(x[i], h);
            xp[i] = x[i] + hi;
            let fp = f(&xp);
            xp[i] = x[i] - hi;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * hi)
        })
        .collect()
}

/// Central-difference Hessian with a fixed absolute step.
pub fn hessian<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64) -> DMatrix<f64> {
    let k = x.len();
    let f0 = f(x);
    let mut m = DMatrix::zeros(k, k);
    let mut xp = x.to_vec();
    for i in 0..k {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h;
                xp[j] = x[j] + sj * h;
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Diagonal starting inverse Hessian from second differences.
fn initial_inverse<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], fx: f64) -> DMatrix<f64> {
    let k = x.len();
    let mut m = DMatrix::zeros(k, k);
    let mut xp = x.to_vec();
    for i in 0..k {
        let h = 1e-3;
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        let c = (fp - 2.0 * fx + fm) / (h * h);
        m[(i, i)] = if c.is_finite() && c > 1e-4 { 1.0 / c } else { 1.0 };
    }
    m
}

/// Gradient size above which a stalled search is restarted.
const STALL_GRAD: f64 = 1e-3;
const MAX_RESTARTS: usize = 10;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// BFGS on the inverse Hessian with Armijo backtracking. Gradients are
/// forward differences far from the optimum and central differences once
/// the objective has nearly settled.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    let k = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() || k == 0 {
        return Minimum {
            x: x0.to_vec(),
            f: fx,
            gradient: vec![0.0; k],
            iterations: 0,
            converged: k == 0 && fx.is_finite(),
        };
    }
    let mut central = false;
    let grad = |f: &mut F, x: &DVector<f64>, fx: f64, central: bool| {
        let g = if central {
            central_gradient(f, x.as_slice(), 1e-5)
        } else {
            forward_gradient(f, x.as_slice(), fx, 1e-7)
        };
        DVector::from_vec(g)
    };
    let mut g = grad(&mut f, &x, fx, central);
    let mut h_inv = initial_inverse(&mut f, x.as_slice(), fx);
    let mut small_changes = 0;
    let mut failures = 0;
    let mut restarts = 0;
    let mut converged = false;
    let mut iter = 0;
    while iter < opts.max_iter {
        iter += 1;
        if max_abs(g.as_slice()) < opts.grad_tol {
            converged = true;
            break;
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = dir.dot(&g);
        if !(slope < 0.0) {
            h_inv = initial_inverse(&mut f, x.as_slice(), fx);
            dir = -(&h_inv * &g);
            slope = dir.dot(&g);
        }
        let biggest = max_abs(dir.as_slice());
        if biggest > opts.max_step {
            dir *= opts.max_step / biggest;
            slope *= opts.max_step / biggest;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let xn = &x + &dir * t;
            let fnew = f(xn.as_slice());
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            failures += 1;
            if !central {
                central = true;
                g = grad(&mut f, &x, fx, central);
                continue;
            }
            if failures >= 3 {
                converged = max_abs(g.as_slice()) < STALL_GRAD;
                break;
            }
            h_inv = initial_inverse(&mut f, x.as_slice(), fx);
            continue;
        };
        failures = 0;
        let rel = (fx - fnew).abs() / fx.abs().max(1.0);
        if rel < 1e-6 {
            central = true;
        }
        let gn = grad(&mut f, &xn, fnew, central);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h_inv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        x = xn;
        fx = fnew;
        g = gn;
        if rel < opts.rel_tol && central {
            // Tiny steps against a clearly non-zero gradient mean the
            // curvature estimate has degenerated, not that we have arrived.
            let stalled = max_abs(g.as_slice()) > STALL_GRAD;
            if stalled && restarts < MAX_RESTARTS {
                restarts += 1;
                small_changes = 0;
                h_inv = initial_inverse(&mut f, x.as_slice(), fx);
                continue;
            }
            small_changes += 1;
            if small_changes >= 2 {
                if stalled {
                    // Objectives with kinks (ties in the data under a power
                    // below one) can settle without a small gradient.
                    log::warn!("objective settled with gradient max-norm {:.2e}", max_abs(g.as_slice()));
                }
                converged = true;
                break;
            }
        } else {
            small_changes = 0;
        }
    }
    Minimum {
        x: x.as_slice().to_vec(),
        f: fx,
        gradient: g.as_slice().to_vec(),
        iterations: iter,
        converged,
    }
}

/// Brent's method on `[a, b]`; returns `(x_min, f_min)`.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            // parabola through x, w, v
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = bfgs(f, &[-1.2, 1.0], &BfgsOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn respects_rejection_region() {
        // log barrier: infinite for x <= 0
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { x[0] - x[0].ln() };
        let m = bfgs(f, &[5.0], &BfgsOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn brent_quadratic() {
        let (x, fx) = brent(|x| (x - 0.3).powi(2) + 2.0, -4.0, 5.0, 1e-10, 200);
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hessian_of_quadratic() {
        let mut f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] + 0.5 * x[1] * x[1];
        let h = hessian(&mut f, &[0.2, -0.4], 1e-4);
        assert!((h[(0, 0)] - 6.0).abs() < 1e-6);
        assert!((h[(0, 1)] - 1.0).abs() < 1e-6);
        assert!((h[(1, 1)] - 1.0).abs() < 1e-6);
    }
}
