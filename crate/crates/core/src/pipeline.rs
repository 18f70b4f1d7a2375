//! Runs the configured stages on each station and writes the artifacts.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DiagnosticSettings, RunConfig, Stage};
use crate::diagnostics::{acf, ljung_box_csv, ljung_box_table, residual_summary, AcfResult, LjungBox, ResidualSummary};
use crate::error::{Error, Result};
use crate::estimation::{evaluate_at, fit, select_order, FitResult, ModelKind};
use crate::evaluation::{rolling_backtest, EvalReport, ModelForecaster, Persistence, PointForecaster};
use crate::ingestion::{interpolate_gaps, parse_station_csv, SampleSplit, WindSeries};
use crate::spectral::{detect_peaks, periodogram, smooth};

/// Process exit status for an error: 1 configuration, 2 data, 3
/// convergence, 4 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => 1,
        Error::Parse { .. } | Error::Io { .. } | Error::Data(_) | Error::Json(_) => 2,
        Error::NoConvergence => 3,
        Error::LinearAlgebra(_) | Error::MomentDoesNotExist { .. } | Error::MissingStdErrors => 4,
    }
}

/// An error tagged with the stage that raised it.
#[derive(Debug)]
pub struct RunError {
    pub stage: &'static str,
    pub error: Error,
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        exit_code(&self.error)
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

trait Tag<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, RunError>;
}

impl<T> Tag<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, RunError> {
        self.map_err(|error| RunError { stage, error })
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Residual diagnostics of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub summary: ResidualSummary,
    /// ACF of the standardised residuals.
    pub acf_eta: AcfResult,
    /// ACF of `|η|^δ`.
    pub acf_power: AcfResult,
    pub ljung_box_eta: Vec<LjungBox>,
    pub ljung_box_power: Vec<LjungBox>,
}

/// Diagnostics for a fit that still carries its residual paths. Ljung-Box
/// degrees of freedom are reduced by the ARMA order; lag counts not above it
/// are skipped.
pub fn diagnose(fit: &FitResult, settings: &DiagnosticSettings) -> Result<FitDiagnostics> {
    let summary = residual_summary(fit)?;
    let delta = fit.params.aparch.delta;
    let power: Vec<f64> = fit.eta.iter().map(|e| e.abs().powf(delta)).collect();
    let arma = fit.orders.ar + fit.orders.ma;
    let lags: Vec<usize> = settings.ljung_box_lags.iter().copied().filter(|l| *l > arma).collect();
    let max_lag = settings.acf_lags.min(fit.eta.len().saturating_sub(1));
    Ok(FitDiagnostics {
        summary,
        acf_eta: acf(&fit.eta, max_lag)?,
        acf_power: acf(&power, max_lag)?,
        ljung_box_eta: ljung_box_table(&fit.eta, &lags, arma)?,
        ljung_box_power: ljung_box_table(&power, &lags, arma)?,
    })
}

/// Rebuilds the residual paths of a fit loaded from JSON, given the series
/// it was fitted on (or a longer one starting at the same time).
pub fn restore_paths(fit: &FitResult, series: &WindSeries) -> Result<FitResult> {
    if series.len() < fit.n_obs {
        return Err(crate::error::data(format!(
            "series has {} points but the fit used {}",
            series.len(),
            fit.n_obs
        )));
    }
    let mut restored = evaluate_at(&series.head(fit.n_obs), &fit.spec, fit.model, fit.params.clone())?;
    restored.converged = fit.converged;
    restored.iterations = fit.iterations;
    restored.std_errors = fit.std_errors.clone();
    restored.labels = fit.labels.clone();
    Ok(restored)
}

/// Loads, gap-fills and splits one station file.
pub fn load_station(path: &Path, config: &RunConfig) -> Result<(WindSeries, SampleSplit)> {
    let raw = parse_station_csv(path, &config.csv)?;
    if raw.gap_count() > 0 {
        log::info!("{}: interpolating {} missing points", path.display(), raw.gap_count());
    }
    let series = interpolate_gaps(&raw, config.max_gap)?;
    let split = config.split.apply(&series)?;
    Ok((series, split))
}

/// Fits one model kind on the in-sample part, selecting orders by BIC when
/// several candidates are configured.
pub fn fit_model(in_sample: &WindSeries, kind: ModelKind, config: &RunConfig) -> Result<(FitResult, Option<String>)> {
    let mut spec = config.spec.clone();
    if !config.fixed_t_scale {
        spec.t_scale = in_sample.len() as f64;
    }
    let (result, table) = if config.orders.len() == 1 {
        (fit(in_sample, &spec, config.orders[0], kind, &config.fit)?, None)
    } else {
        let sel = select_order(in_sample, &spec, &config.orders, kind, &config.fit)?;
        let mut csv = String::from("orders,bic\n");
        for (o, bic) in &sel.candidates {
            csv.push_str(&format!("\"{o}\",{}\n", bic.map_or(String::new(), |b| b.to_string())));
        }
        (sel.best, Some(csv))
    };
    if config.require_convergence && !result.converged {
        log::error!("{kind} fit did not converge after {} iterations", result.iterations);
        return Err(Error::NoConvergence);
    }
    Ok((result, table))
}

/// What one station produced.
#[derive(Debug, Clone)]
pub struct StationOutcome {
    pub name: String,
    pub output_dir: PathBuf,
    pub split: SampleSplit,
    pub fits: Vec<FitResult>,
    pub report: Option<EvalReport>,
    pub diagnostics: Vec<FitDiagnostics>,
    pub files: Vec<PathBuf>,
}

/// Runs every configured station. Stations after a failing one are not
/// attempted.
pub fn run_pipeline(config: &RunConfig) -> std::result::Result<Vec<StationOutcome>, RunError> {
    config.validate().stage("config")?;
    if config.stations.is_empty() {
        return Err(Error::Config("no station files configured (data.paths)".into())).stage("config");
    }
    let many = config.stations.len() > 1;
    let mut out = Vec::new();
    for path in &config.stations {
        let name = path.file_stem().map_or("station".into(), |s| s.to_string_lossy().into_owned());
        let dir = if many {
            config.output_dir.join(&name)
        } else {
            config.output_dir.clone()
        };
        let (series, split) = load_station(path, config).stage("ingest")?;
        out.push(run_on_series(config, &name, &series, &split, &dir)?);
    }
    Ok(out)
}

/// Runs the configured stages on an already loaded series.
pub fn run_on_series(
    config: &RunConfig,
    name: &str,
    series: &WindSeries,
    split: &SampleSplit,
    dir: &Path,
) -> std::result::Result<StationOutcome, RunError> {
    let mut files = Vec::new();
    let mut emit = |file: &str, contents: &str, stage: &'static str| -> std::result::Result<(), RunError> {
        let path = dir.join(file);
        write_file(&path, contents).stage(stage)?;
        files.push(path);
        Ok(())
    };
    let in_sample = series.head(split.in_sample.end);
    log::info!(
        "{name}: {} points, {} in sample, {} out of sample",
        series.len(),
        split.in_sample.len(),
        split.out_sample.len()
    );

    if config.wants(Stage::Spectrum) {
        let s = &config.spectrum;
        let pg = periodogram(&in_sample.values).stage("spectrum")?;
        let smoothed = smooth(&pg, s.bandwidth).stage("spectrum")?;
        let peaks = detect_peaks(&smoothed, s.max_period, s.top_k).stage("spectrum")?;
        emit("spectrum.csv", &smoothed.to_csv(), "spectrum")?;
        let mut csv = String::from("rank,period_steps\n");
        for (i, p) in peaks.periods.iter().enumerate() {
            csv.push_str(&format!("{},{p}\n", i + 1));
        }
        emit("peaks.csv", &csv, "spectrum")?;
    }

    let needs_fit = config.wants(Stage::Fit) || config.wants(Stage::Evaluate) || config.wants(Stage::Diagnose);
    let mut fits = Vec::new();
    if needs_fit {
        let results: Vec<Result<(FitResult, Option<String>)>> =
            config.models.par_iter().map(|k| fit_model(&in_sample, *k, config)).collect();
        for (kind, r) in config.models.iter().zip(results) {
            let (f, table) = r.stage("fit")?;
            log::info!("{name}: {kind} fit, BIC {:.5}, {} iterations", f.bic, f.iterations);
            emit(&format!("fit_{kind}.json"), &f.to_json().stage("fit")?, "fit")?;
            emit(&format!("fit_{kind}.txt"), &f.to_table(), "fit")?;
            if let Some(t) = table {
                emit(&format!("selection_{kind}.csv"), &t, "fit")?;
            }
            fits.push(f);
        }
    }

    let mut report = None;
    if config.wants(Stage::Evaluate) {
        let model_fc: Vec<ModelForecaster> = fits
            .iter()
            .map(|f| ModelForecaster::with_window(f.model.report_name(), f, series, config.window))
            .collect::<Result<_>>()
            .stage("evaluate")?;
        let persistence = Persistence { series };
        let mut models: Vec<&dyn PointForecaster> = model_fc.iter().map(|m| m as &dyn PointForecaster).collect();
        if config.persistence {
            models.push(&persistence);
        }
        let r = rolling_backtest(series, split, &models, &config.backtest).stage("evaluate")?;
        emit("report.csv", &r.to_csv(), "evaluate")?;
        emit("report.json", &r.to_json().stage("evaluate")?, "evaluate")?;
        report = Some(r);
    }

    let mut diagnostics = Vec::new();
    if config.wants(Stage::Diagnose) {
        for f in &fits {
            let d = diagnose(f, &config.diagnostics).stage("diagnose")?;
            let kind = f.model;
            emit(&format!("acf_eta_{kind}.csv"), &d.acf_eta.to_csv(), "diagnose")?;
            emit(&format!("acf_power_{kind}.csv"), &d.acf_power.to_csv(), "diagnose")?;
            emit(&format!("ljung_box_eta_{kind}.csv"), &ljung_box_csv(&d.ljung_box_eta), "diagnose")?;
            emit(&format!("ljung_box_power_{kind}.csv"), &ljung_box_csv(&d.ljung_box_power), "diagnose")?;
            emit(&format!("histogram_{kind}.csv"), &d.summary.histogram.to_csv(), "diagnose")?;
            let json = serde_json::to_string_pretty(&d.summary).map_err(Error::from).stage("diagnose")?;
            emit(&format!("summary_{kind}.json"), &json, "diagnose")?;
            diagnostics.push(d);
        }
    }

    Ok(StationOutcome {
        name: name.to_string(),
        output_dir: dir.to_path_buf(),
        split: split.clone(),
        fits,
        report,
        diagnostics,
        files,
    })
}
