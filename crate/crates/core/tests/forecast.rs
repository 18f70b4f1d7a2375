use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use windcast::aparch::{skew_t_sample, AparchParams, SkewTParams};
use windcast::arfima::{filter_to_innovations, inverse_filter, ArfimaParams};
use windcast::estimation::{deterministic_mean, evaluate_at, FitResult, ModelKind, ModelParams};
use windcast::forecast::Forecaster;
use windcast::ingestion::WindSeries;
use windcast::seasonal::{SeasonalSpec, DAY_STEPS, YEAR_STEPS};
use windcast::simulate::simulate;

fn setup(n: usize) -> (FitResult, WindSeries) {
    let spec = SeasonalSpec::new(YEAR_STEPS, DAY_STEPS, vec![vec![0, 1], vec![1, 1]], true, n as f64).unwrap();
    let params = ModelParams {
        theta: vec![7.0, -1.0, 1.5, 0.8, 0.4],
        p_exponents: spec.p_vector(),
        arfima: ArfimaParams::new(0.3, vec![0.6, -0.2], vec![0.25], 1000).unwrap(),
        aparch: AparchParams::new(0.05, vec![0.12], vec![0.5, 0.3], vec![-0.2], 1.3).unwrap(),
        skewt: SkewTParams::new(1.1, 7.0).unwrap(),
    };
    let series = simulate(&params, &spec, n, 21).unwrap();
    let fit = evaluate_at(&series, &spec, ModelKind::Fourier, params).unwrap();
    (fit, series)
}

#[test]
fn mean_forecast_equals_inverse_filter_with_zero_future_shocks() {
    let n = 3000;
    let h = 18;
    let (fit, series) = setup(n);
    let fc = Forecaster::new(&fit, &series).unwrap();
    let mu = deterministic_mean(&fit, 0..n + h);
    for origin in [1200, 2000, n - 1] {
        let eps: Vec<f64> = (0..=origin).map(|t| series.values[t] - mu[t]).collect();
        let mut z = filter_to_innovations(&eps, &fit.params.arfima);
        z.extend(std::iter::repeat_n(0.0, h));
        let path = inverse_filter(&z, &fit.params.arfima);
        let got = fc.mean(origin, h).unwrap();
        for u in 1..=h {
            let want = mu[origin + u] + path[origin + u];
            assert!((got[u - 1] - want).abs() < 1e-9, "origin {origin} u {u}: {} vs {want}", got[u - 1]);
        }
    }
}

#[test]
fn scale_forecast_matches_monte_carlo() {
    let n = 3000;
    let h = 18;
    let paths = 100_000;
    let (fit, series) = setup(n);
    let fc = Forecaster::new(&fit, &series).unwrap();
    let origin = n - 1;
    let want = fc.scale(origin, h).unwrap();

    let ap = &fit.params.aparch;
    let (a, b1, b2, g, delta) = (ap.alpha[0], ap.beta[0], ap.beta[1], ap.gamma[0], ap.delta);
    let z_last = fit.eta[origin] * fit.sigma[origin];
    let s_last = fit.sigma[origin].powf(delta);
    let s_prev = fit.sigma[origin - 1].powf(delta);
    let first = ap.alpha0 + a * (z_last.abs() - g * z_last).powf(delta) + b1 * s_last + b2 * s_prev;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = skew_t_sample(&fit.params.skewt, &mut rng, paths * h).unwrap();
    let mut sum = vec![0.0; h];
    let mut sum_sq = vec![0.0; h];
    for p in 0..paths {
        let (mut prev, mut cur) = (s_last, first);
        for u in 0..h {
            sum[u] += cur;
            sum_sq[u] += cur * cur;
            let z = draws[p * h + u] * cur.powf(1.0 / delta);
            let next = ap.alpha0 + a * (z.abs() - g * z).powf(delta) + b1 * cur + b2 * prev;
            prev = cur;
            cur = next;
        }
    }
    assert!((want[0] - first).abs() < 1e-12 * first);
    for u in 0..h {
        let m = sum[u] / paths as f64;
        let se = ((sum_sq[u] / paths as f64 - m * m) / paths as f64).sqrt();
        assert!((want[u] - m).abs() < 4.0 * se + 1e-12, "step {}: {} vs {m} ± {se}", u + 1, want[u]);
    }
    let m = sum[h - 1] / paths as f64;
    println!("E[sigma^delta] at h = {h}: recursion {:.6}, Monte Carlo {m:.6}", want[h - 1]);
}
