use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use windcast::config::{RunConfig, Stage};
use windcast::estimation::{FitResult, ModelKind, Orders};
use windcast::evaluation::{rolling_backtest, ModelForecaster, Origins, Persistence, PointForecaster};
use windcast::forecast::Forecaster;
use windcast::ingestion::{parse_timestamp, WindSeries};
use windcast::pipeline::{self, exit_code, fit_model, load_station, restore_paths, write_file, RunError};
use windcast::seasonal::SeasonalSpec;
use windcast::simulate::{simulate_with, SimulationOptions};
use windcast::spectral::{detect_peaks, periodogram, smooth};
use windcast::{presets, Error};

/// Seasonal long-memory wind speed models: fitting, forecasting and
/// forecast evaluation.
///
/// Log verbosity follows the WINDCAST_LOG environment variable
/// (error, warn, info, debug, trace; default info).
#[derive(Parser)]
#[command(name = "windcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Station CSV file.
    #[arg(long, short)]
    input: PathBuf,
    /// Config file (column names, gaps, seasonal spec, split, backtest).
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Smoothed periodogram of the in-sample series as frequency,power CSV.
    Spectrum {
        #[command(flatten)]
        input: Input,
        #[arg(long, short, default_value = "spectrum.csv")]
        output: PathBuf,
        /// Daniell window length (odd); 1 writes the raw periodogram.
        #[arg(long)]
        bandwidth: Option<usize>,
    },
    /// Fit one model on the in-sample series and write it as JSON.
    Fit {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "fourier")]
        model: ModelKind,
        /// j,q,Q,P; overrides the config.
        #[arg(long)]
        orders: Option<Orders>,
        /// Config file holding the seasonal specification.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, short, default_value = "fit.json")]
        output: PathBuf,
        /// Fit the whole series instead of the in-sample part.
        #[arg(long)]
        all: bool,
    },
    /// Mean and scale forecasts from one origin as step,mean,scale CSV.
    Forecast {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        fit: PathBuf,
        /// Forecast origin timestamp (the last observation used).
        #[arg(long)]
        origin: String,
        #[arg(long, default_value_t = 18)]
        horizon: usize,
        /// Write to a file instead of standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Rolling out-of-sample comparison of fitted models and persistence.
    Evaluate {
        #[command(flatten)]
        input: Input,
        /// Fitted model JSON; repeat for several models.
        #[arg(long, required = true)]
        fit: Vec<PathBuf>,
        /// Number of random origins, or `all`.
        #[arg(long)]
        origins: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Residual ACFs, Ljung-Box tests and histogram against the fitted density.
    Diagnose {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, short, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Simulate a series from fitted or published parameters.
    Simulate {
        /// Parameters from a fitted model JSON.
        #[arg(long, conflicts_with = "preset")]
        fit: Option<PathBuf>,
        /// Built-in station parameter set: manschnow, lindenberg,
        /// angermuende or gruenow.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, short, default_value_t = 60_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// First timestamp.
        #[arg(long, default_value = "2010-01-01T00:00:00Z")]
        start: String,
        /// Keep negative values instead of clipping them at zero.
        #[arg(long)]
        no_clip: bool,
        #[arg(long, short, default_value = "simulated.csv")]
        output: PathBuf,
    },
    /// Run the stages named in a config file.
    Run {
        #[arg(long, short)]
        config: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> windcast::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::default()),
    }
}

fn read_fit(path: &Path) -> windcast::Result<FitResult> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    FitResult::from_json(&text)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn timestamp(raw: &str) -> windcast::Result<chrono::DateTime<chrono::Utc>> {
    parse_timestamp(raw).ok_or_else(|| bad(format!("`{raw}` is not a timestamp")))
}

fn run(cli: Cli) -> Result<(), RunError> {
    let tag = |stage: &'static str| move |error: Error| RunError { stage, error };
    match cli.command {
        Command::Spectrum {
            input,
            output,
            bandwidth,
        } => {
            let config = load_config(input.config.as_deref()).map_err(tag("config"))?;
            let (series, split) = load_station(&input.input, &config).map_err(tag("ingest"))?;
            let pg = periodogram(&series.values[split.in_sample]).map_err(tag("spectrum"))?;
            let bw = bandwidth.unwrap_or(config.spectrum.bandwidth);
            let sm = smooth(&pg, bw).map_err(tag("spectrum"))?;
            write_file(&output, &sm.to_csv()).map_err(tag("spectrum"))?;
            let peaks = detect_peaks(&sm, config.spectrum.max_period, config.spectrum.top_k).map_err(tag("spectrum"))?;
            for p in peaks.periods {
                println!("peak at period {p:.1} steps");
            }
        }
        Command::Fit {
            input,
            model,
            orders,
            spec,
            output,
            all,
        } => {
            let mut config = load_config(input.config.as_deref()).map_err(tag("config"))?;
            if let Some(path) = spec {
                let map = windcast::config::ConfigMap::from_file(&path).map_err(tag("config"))?;
                config.spec = windcast::config::seasonal_from_config(&map).map_err(tag("config"))?;
                config.fixed_t_scale = map.get("seasonal.t_scale").is_some();
            }
            if let Some(o) = orders {
                config.orders = vec![o];
            }
            let (series, split) = load_station(&input.input, &config).map_err(tag("ingest"))?;
            let sample = if all { series } else { series.head(split.in_sample.end) };
            let (f, _) = fit_model(&sample, model, &config).map_err(tag("fit"))?;
            write_file(&output, &f.to_json().map_err(tag("fit"))?).map_err(tag("fit"))?;
            print!("{}", f.to_table());
        }
        Command::Forecast {
            input,
            fit,
            origin,
            horizon,
            output,
        } => {
            let config = load_config(input.config.as_deref()).map_err(tag("config"))?;
            let ts = timestamp(&origin).map_err(tag("config"))?;
            let f = read_fit(&fit).map_err(tag("ingest"))?;
            let (series, _) = load_station(&input.input, &config).map_err(tag("ingest"))?;
            let idx = series
                .index_at_or_after(ts)
                .filter(|i| *i < series.len())
                .ok_or_else(|| bad(format!("origin {origin} is outside the series")))
                .map_err(tag("forecast"))?;
            let max_h = horizon.max(windcast::forecast::DEFAULT_MAX_HORIZON);
            let fc = Forecaster::with_limits(&f, &series, config.window, max_h).map_err(tag("forecast"))?;
            let csv = fc.path(idx, horizon).map_err(tag("forecast"))?.to_csv();
            match output {
                Some(p) => write_file(&p, &csv).map_err(tag("forecast"))?,
                None => print!("{csv}"),
            }
        }
        Command::Evaluate {
            input,
            fit,
            origins,
            seed,
            output_dir,
        } => {
            let mut config = load_config(input.config.as_deref()).map_err(tag("config"))?;
            if let Some(o) = origins {
                config.backtest.origins = if o.eq_ignore_ascii_case("all") {
                    Origins::All
                } else {
                    Origins::Random(o.parse().map_err(|_| bad(format!("--origins `{o}` is not a count"))).map_err(tag("config"))?)
                };
            }
            if let Some(s) = seed {
                config.backtest.seed = s;
            }
            config.validate().map_err(tag("config"))?;
            let fits: Vec<FitResult> = fit.iter().map(|p| read_fit(p)).collect::<Result<_, _>>().map_err(tag("ingest"))?;
            let (series, split) = load_station(&input.input, &config).map_err(tag("ingest"))?;
            let models: Vec<ModelForecaster> = fits
                .iter()
                .map(|f| ModelForecaster::with_window(f.model.report_name(), f, &series, config.window))
                .collect::<Result<_, _>>()
                .map_err(tag("evaluate"))?;
            let persistence = Persistence { series: &series };
            let mut all: Vec<&dyn PointForecaster> = models.iter().map(|m| m as &dyn PointForecaster).collect();
            if config.persistence {
                all.push(&persistence);
            }
            let report = rolling_backtest(&series, &split, &all, &config.backtest).map_err(tag("evaluate"))?;
            write_file(&output_dir.join("report.csv"), &report.to_csv()).map_err(tag("evaluate"))?;
            write_file(&output_dir.join("report.json"), &report.to_json().map_err(tag("evaluate"))?)
                .map_err(tag("evaluate"))?;
            print!("{}", report.to_csv());
        }
        Command::Diagnose {
            input,
            fit,
            output_dir,
        } => {
            let mut config = load_config(input.config.as_deref()).map_err(tag("config"))?;
            config.stages = vec![Stage::Diagnose];
            let f = read_fit(&fit).map_err(tag("ingest"))?;
            let (series, _) = load_station(&input.input, &config).map_err(tag("ingest"))?;
            let f = restore_paths(&f, &series).map_err(tag("diagnose"))?;
            let d = pipeline::diagnose(&f, &config.diagnostics).map_err(tag("diagnose"))?;
            let kind = f.model;
            let files = [
                (format!("acf_eta_{kind}.csv"), d.acf_eta.to_csv()),
                (format!("acf_power_{kind}.csv"), d.acf_power.to_csv()),
                (
                    format!("ljung_box_eta_{kind}.csv"),
                    windcast::diagnostics::ljung_box_csv(&d.ljung_box_eta),
                ),
                (
                    format!("ljung_box_power_{kind}.csv"),
                    windcast::diagnostics::ljung_box_csv(&d.ljung_box_power),
                ),
                (format!("histogram_{kind}.csv"), d.summary.histogram.to_csv()),
            ];
            for (name, contents) in files {
                write_file(&output_dir.join(name), &contents).map_err(tag("diagnose"))?;
            }
            println!("MSE {:.6}  R² {:.6}", d.summary.mse, d.summary.r_squared);
            if let Some(g) = d.summary.goodness_of_fit {
                println!("chi-square {:.3} on {} df, p = {:.4}", g.statistic, g.df, g.p_value);
            }
        }
        Command::Simulate {
            fit,
            preset,
            n,
            seed,
            start,
            no_clip,
            output,
        } => {
            let (params, spec) = match (fit, preset.as_deref()) {
                (Some(path), _) => {
                    let f = read_fit(&path).map_err(tag("ingest"))?;
                    (f.params, f.spec)
                }
                (None, Some(name)) => {
                    let Some(station) = presets::station(name) else {
                        return Err(bad(format!("unknown preset `{name}`"))).map_err(tag("config"));
                    };
                    let spec = SeasonalSpec::default_with_scale(n as f64);
                    (station.params(&spec), spec)
                }
                (None, None) => return Err(bad("give --fit or --preset")).map_err(tag("config")),
            };
            let options = SimulationOptions {
                clip: !no_clip,
                start: timestamp(&start).map_err(tag("config"))?,
                ..Default::default()
            };
            let sim = simulate_with(&params, &spec, n, seed, &options).map_err(tag("simulate"))?;
            write_csv(&sim.series, &output).map_err(tag("simulate"))?;
            println!("wrote {n} values ({} clipped) to {}", sim.clipped, output.display());
        }
        Command::Run { config } => {
            let config = RunConfig::from_file(&config).map_err(tag("config"))?;
            for outcome in pipeline::run_pipeline(&config)? {
                println!("{}: {} files in {}", outcome.name, outcome.files.len(), outcome.output_dir.display());
                if let Some(r) = outcome.report {
                    print!("{}", r.to_csv());
                }
            }
        }
    }
    Ok(())
}

fn write_csv(series: &WindSeries, path: &Path) -> windcast::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    series.write_csv_file(path, &Default::default())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WINDCAST_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e.error) as u8)
        }
    }
}
