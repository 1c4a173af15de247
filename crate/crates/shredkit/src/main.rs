//! Command-line front end: config-driven dataset generation, sensor
//! placement, training, evaluation, sweeps, forecasting, and SVG plots.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use shredkit::datasets::{
    make_windows, sample_sensors, save_field_file, split_interspersed, Scaler, SplitLabel,
};
use shredkit::error::{Error, Result};
use shredkit::harness::{
    self, mix_seed, ExperimentConfig, Method, Placement, run_ensemble, run_forecast_experiment,
    run_noise_sweep,
};
use shredkit::models::{train, SdnModel, ShredArchitecture, ShredModel, TrainConfig};
use shredkit::plot::{render_chart, ChartSpec, Series};
use shredkit::pod;

#[derive(Parser)]
#[command(name = "shredkit", version, about = "Sparse-sensor field reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Shred,
    Sdn,
    #[value(alias = "qr_pod")]
    QrPod,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Shred => Method::Shred,
            MethodArg::Sdn => Method::Sdn,
            MethodArg::QrPod => Method::QrPod,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlacementArg {
    Qr,
    Random,
}

impl From<PlacementArg> for Placement {
    fn from(p: PlacementArg) -> Placement {
        match p {
            PlacementArg::Qr => Placement::Qr,
            PlacementArg::Random => Placement::Random,
        }
    }
}

#[derive(Debug, clap::Args)]
struct CommonArgs {
    /// Experiment config file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available processors)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the sensor count list with a single count
    #[arg(long)]
    sensors: Option<usize>,
    /// Override the noise alpha list with a single level
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the lag
    #[arg(long)]
    lag: Option<usize>,
    /// Override the method
    #[arg(long)]
    method: Option<MethodArg>,
    /// Override the placement strategy
    #[arg(long)]
    placement: Option<PlacementArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotKind {
    /// error vs sensor count from a sweep summary
    Sweep,
    /// error vs noise level from a noise-sweep summary
    Noise,
    /// per-step forecast error curves
    Forecast,
}

#[derive(Debug, clap::Args)]
struct PlotArgs {
    /// Summary document (JSON) produced by sweep, noise-sweep, or forecast
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    kind: PlotKind,
    /// Output SVG path
    #[arg(long)]
    out: PathBuf,
    /// Log-scale the error axis
    #[arg(long)]
    log_y: bool,
}

#[derive(Debug, clap::Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to evaluate
    #[arg(long)]
    model: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured dataset and write it as a field file
    Generate(CommonArgs),
    /// Compute a sensor placement and write it as JSON
    Place(CommonArgs),
    /// Train one model on the configured cell and save a checkpoint
    Train(CommonArgs),
    /// Evaluate a saved checkpoint on the configured test split
    Evaluate(EvaluateArgs),
    /// Run the trial ensemble over sensor counts
    Sweep(CommonArgs),
    /// Run the trial ensemble over noise levels
    NoiseSweep(CommonArgs),
    /// Run the two-stage forecast experiment
    Forecast(CommonArgs),
    /// Render an SVG chart from a summary document
    Plot(PlotArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // single line, category first, machine parsable
            eprintln!("error: {}: {}", e.category(), e);
            ExitCode::FAILURE
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let raw = std::fs::read_to_string(&args.config).map_err(|e| Error::Io {
        path: args.config.display().to_string(),
        source: e,
    })?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&raw).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(s) = args.sensors {
        cfg.sensor_counts = vec![s];
    }
    if let Some(a) = args.alpha {
        cfg.noise_alphas = vec![a];
    }
    if let Some(k) = args.lag {
        cfg.lag = k;
    }
    if let Some(m) = args.method {
        cfg.method = m.into();
    }
    if let Some(p) = args.placement {
        cfg.placement = p.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workers(args: &CommonArgs) -> usize {
    if shredkit::deterministic_mode() {
        return 1;
    }
    args.workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let field = cfg.dataset.realize()?;
            let path = args.out.join("dataset.flds");
            save_field_file(&field, &path)?;
            println!(
                "wrote {} ({} snapshots, state dim {})",
                path.display(),
                field.len(),
                field.state_dim()
            );
            Ok(())
        }
        Command::Place(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let sensors = place_from_config(&cfg)?;
            #[derive(Serialize)]
            struct PlacementDoc<'a> {
                placement: &'a str,
                indices: &'a [usize],
            }
            let doc = PlacementDoc {
                placement: cfg.placement.name(),
                indices: &sensors,
            };
            let path = args.out.join("sensors.json");
            std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).map_err(|e| {
                Error::Io {
                    path: path.display().to_string(),
                    source: e,
                }
            })?;
            println!("wrote {} (sensors {:?})", path.display(), sensors);
            Ok(())
        }
        Command::Train(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let (path, final_val) = train_from_config(&cfg, &args.out)?;
            println!("wrote {} (best validation loss {:.6e})", path.display(), final_val);
            Ok(())
        }
        Command::Evaluate(args) => {
            let cfg = load_config(&args.common)?;
            let error = evaluate_checkpoint(&cfg, &args.model)?;
            println!("test error {:.6e}", error);
            Ok(())
        }
        Command::Sweep(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let res = run_ensemble(&cfg, workers(&args))?;
            let trials_path = args.out.join("trials.csv");
            let summary_path = args.out.join("summary.json");
            harness::write_trials_csv(&trials_path, &res.trials)?;
            harness::write_summaries_json(&summary_path, &res.summaries)?;
            for s in &res.summaries {
                println!(
                    "{}/{} sensors={} alpha={} median={:.4e} iqr=[{:.4e}, {:.4e}]",
                    s.method.name(),
                    s.placement.name(),
                    s.sensor_count,
                    s.alpha,
                    s.median,
                    s.q25,
                    s.q75
                );
            }
            println!("wrote {} and {}", trials_path.display(), summary_path.display());
            Ok(())
        }
        Command::NoiseSweep(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let res = run_noise_sweep(&cfg, workers(&args))?;
            let trials_path = args.out.join("trials.csv");
            let summary_path = args.out.join("summary.json");
            harness::write_trials_csv(&trials_path, &res.trials)?;
            harness::write_summaries_json(&summary_path, &res.summaries)?;
            for s in &res.summaries {
                println!(
                    "{}/{} sensors={} alpha={} median={:.4e}",
                    s.method.name(),
                    s.placement.name(),
                    s.sensor_count,
                    s.alpha,
                    s.median
                );
            }
            println!("wrote {} and {}", trials_path.display(), summary_path.display());
            Ok(())
        }
        Command::Forecast(args) => {
            let cfg = load_config(&args)?;
            ensure_out(&args.out)?;
            let res = run_forecast_experiment(
                &cfg,
                cfg.forecast_horizon,
                cfg.forecast_runs,
                workers(&args),
            )?;
            let path = args.out.join("forecast.json");
            harness::write_forecast_json(&path, &res)?;
            println!(
                "horizon {} runs {}: final-step shred median {:.4e}, pod median {:.4e}, ensembled {:.4e}",
                res.horizon,
                res.runs,
                res.shred_median.last().unwrap(),
                res.pod_median.last().unwrap(),
                res.ensembled_error.last().unwrap()
            );
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Plot(args) => {
            let svg = match args.kind {
                PlotKind::Sweep => plot_sweep(&args.input, args.log_y, "sensor count", |s| {
                    s.sensor_count as f64
                })?,
                PlotKind::Noise => plot_sweep(&args.input, args.log_y, "noise level", |s| s.alpha)?,
                PlotKind::Forecast => plot_forecast(&args.input, args.log_y)?,
            };
            let out = if args.out.is_dir() {
                args.out.join("chart.svg")
            } else {
                args.out.clone()
            };
            std::fs::write(&out, svg).map_err(|e| Error::Io {
                path: out.display().to_string(),
                source: e,
            })?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn place_from_config(cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    let clean = cfg.dataset.realize()?;
    let n_sensors = cfg.sensor_counts[0];
    let sensors = match cfg.placement {
        Placement::Random => pod::random_place_sensors(
            clean.state_dim(),
            n_sensors,
            mix_seed(&[cfg.base_seed, 3, n_sensors as u64, 0]),
            clean.mask(),
        )?,
        Placement::Qr => {
            let r = n_sensors
                .min(cfg.r_max.unwrap_or(usize::MAX))
                .min(clean.state_dim())
                .min(clean.len())
                .max(1);
            let basis = pod::fit_pod(&clean, r)?;
            pod::qr_place_sensors(&basis, n_sensors, clean.mask())?
        }
    };
    Ok(sensors.indices)
}

/// Trains the configured network on trial-0 data and saves a checkpoint.
fn train_from_config(cfg: &ExperimentConfig, out: &Path) -> Result<(PathBuf, f64)> {
    let clean = cfg.dataset.realize()?;
    let alpha = cfg.noise_alphas[0];
    let n_sensors = cfg.sensor_counts[0];
    let noisy = shredkit::datasets::add_noise(
        &clean,
        &shredkit::datasets::NoiseSpec {
            alpha,
            seed: mix_seed(&[cfg.base_seed, 1, alpha.to_bits(), 0]),
        },
        &clean,
    )?;
    let n = clean.len();
    if n <= cfg.lag {
        return Err(Error::InvalidArgument(format!(
            "dataset of {} snapshots too short for lag {}",
            n, cfg.lag
        )));
    }
    let split = split_interspersed(
        n - cfg.lag,
        cfg.split_fractions,
        mix_seed(&[cfg.base_seed, 2, 0]),
    )?;
    let indices = place_from_config(cfg)?;
    let sensors = pod::SensorSet::new(
        indices,
        clean.state_dim(),
        match cfg.placement {
            Placement::Qr => pod::PlacementMethod::QrPivot,
            Placement::Random => pod::PlacementMethod::Random,
        },
    )?;
    let measurements = sample_sensors(&noisy, &sensors)?;
    let windowed = make_windows(&measurements, &noisy, cfg.lag, &split)?;

    let idx_of = |label: SplitLabel| -> Vec<usize> {
        windowed
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    };
    let train_idx = idx_of(SplitLabel::Train);
    let val_idx = idx_of(SplitLabel::Validation);
    let meas_rows: Vec<&[f64]> = measurements.values.iter().map(|v| v.as_slice()).collect();
    let input_scaler = Scaler::fit(&meas_rows)?;
    let train_rows: Vec<&[f64]> = train_idx
        .iter()
        .map(|&i| windowed.targets[i].as_slice())
        .collect();
    let target_scaler = Scaler::fit(&train_rows)?;

    let model_seed = mix_seed(&[cfg.base_seed, 4, n_sensors as u64, alpha.to_bits(), 0]);
    let train_cfg = TrainConfig {
        seed: mix_seed(&[cfg.train.seed, 5, model_seed]),
        ..cfg.train.clone()
    };
    let gather_targets = |idx: &[usize]| -> Vec<Vec<f64>> {
        idx.iter()
            .map(|&i| target_scaler.apply(&windowed.targets[i]))
            .collect()
    };

    let (path, history) = match cfg.method {
        Method::Shred => {
            let scaled: Vec<Vec<f64>> = windowed
                .windows
                .iter()
                .map(|w| {
                    w.chunks(windowed.n_sensors)
                        .flat_map(|m| input_scaler.apply(m))
                        .collect()
                })
                .collect();
            let arch = ShredArchitecture {
                n_sensors: windowed.n_sensors,
                state_dim: clean.state_dim(),
                lag: cfg.lag,
                lstm_layers: cfg.lstm_layers,
                hidden_size: cfg.hidden_size,
                decoder_widths: cfg.decoder_widths.clone(),
            };
            let mut model = ShredModel::new(
                arch,
                input_scaler,
                target_scaler.clone(),
                sensors.indices.clone(),
                model_seed,
            );
            let gx = |idx: &[usize]| -> Vec<Vec<f64>> {
                idx.iter().map(|&i| scaled[i].clone()).collect()
            };
            let history = train(
                &mut model,
                &gx(&train_idx),
                &gather_targets(&train_idx),
                &gx(&val_idx),
                &gather_targets(&val_idx),
                &train_cfg,
            )?;
            let path = out.join("model.shrd");
            model.save(&path)?;
            (path, history)
        }
        Method::Sdn => {
            let inputs: Vec<Vec<f64>> = windowed
                .target_times
                .iter()
                .map(|&ti| input_scaler.apply(&measurements.values[ti]))
                .collect();
            let mut model = SdnModel::new(
                windowed.n_sensors,
                clean.state_dim(),
                &cfg.decoder_widths,
                input_scaler,
                target_scaler.clone(),
                model_seed,
            );
            let gx = |idx: &[usize]| -> Vec<Vec<f64>> {
                idx.iter().map(|&i| inputs[i].clone()).collect()
            };
            let history = train(
                &mut model,
                &gx(&train_idx),
                &gather_targets(&train_idx),
                &gx(&val_idx),
                &gather_targets(&val_idx),
                &train_cfg,
            )?;
            let path = out.join("model.shrd");
            model.save(&path)?;
            (path, history)
        }
        Method::QrPod => {
            return Err(Error::Config(
                "train applies to network methods; qr_pod has no trainable model".into(),
            ))
        }
    };
    let best = history
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    Ok((path, best))
}

/// Rebuilds the trial-0 test split and scores a saved SHRED checkpoint
/// against the clean field.
fn evaluate_checkpoint(cfg: &ExperimentConfig, model_path: &Path) -> Result<f64> {
    let model = ShredModel::load(model_path)?;
    let clean = cfg.dataset.realize()?;
    let alpha = cfg.noise_alphas[0];
    let noisy = shredkit::datasets::add_noise(
        &clean,
        &shredkit::datasets::NoiseSpec {
            alpha,
            seed: mix_seed(&[cfg.base_seed, 1, alpha.to_bits(), 0]),
        },
        &clean,
    )?;
    let k = model.arch.lag;
    let split = split_interspersed(
        clean.len() - k,
        cfg.split_fractions,
        mix_seed(&[cfg.base_seed, 2, 0]),
    )?;
    let sensors = pod::SensorSet::new(
        model.sensor_indices.clone(),
        clean.state_dim(),
        pod::PlacementMethod::User,
    )?;
    let measurements = sample_sensors(&noisy, &sensors)?;
    let windowed = make_windows(&measurements, &noisy, k, &split)?;
    let test_idx: Vec<usize> = windowed
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == SplitLabel::Test)
        .map(|(i, _)| i)
        .collect();
    let windows: Vec<Vec<Vec<f64>>> = test_idx
        .iter()
        .map(|&i| {
            windowed.windows[i]
                .chunks(windowed.n_sensors)
                .map(|c| c.to_vec())
                .collect()
        })
        .collect();
    let estimates = model.predict(&windows)?;
    let truths: Vec<Vec<f64>> = test_idx
        .iter()
        .map(|&i| clean.snapshots()[windowed.target_times[i]].clone())
        .collect();
    harness::reconstruction_error(&estimates, &truths)
}

fn plot_sweep(
    input: &Path,
    log_y: bool,
    x_label: &str,
    x_of: impl Fn(&harness::EnsembleSummary) -> f64,
) -> Result<String> {
    let summaries = harness::load_summaries_json(input)?;
    if summaries.is_empty() {
        return Err(Error::InvalidArgument("empty summary document".into()));
    }
    // one series per (method, placement, other-axis value)
    let mut keys: Vec<(Method, Placement, String)> = Vec::new();
    for s in &summaries {
        let other = if x_label.starts_with("sensor") {
            format!("alpha={}", s.alpha)
        } else {
            format!("sensors={}", s.sensor_count)
        };
        let key = (s.method, s.placement, other);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut series = Vec::new();
    for (method, placement, other) in keys {
        let mut pts: Vec<(f64, f64, f64, f64)> = summaries
            .iter()
            .filter(|s| {
                s.method == method
                    && s.placement == placement
                    && (if x_label.starts_with("sensor") {
                        format!("alpha={}", s.alpha) == other
                    } else {
                        format!("sensors={}", s.sensor_count) == other
                    })
            })
            .map(|s| (x_of(s), s.median, s.q25, s.q75))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        series.push(Series {
            label: format!("{}/{} {}", method.name(), placement.name(), other),
            xs: pts.iter().map(|p| p.0).collect(),
            ys: pts.iter().map(|p| p.1).collect(),
            band: Some((
                pts.iter().map(|p| p.2).collect(),
                pts.iter().map(|p| p.3).collect(),
            )),
            dashed: false,
        });
    }
    render_chart(
        &ChartSpec {
            title: format!("reconstruction error vs {}", x_label),
            x_label: x_label.into(),
            y_label: "relative error".into(),
            log_y,
        },
        &series,
    )
}

fn plot_forecast(input: &Path, log_y: bool) -> Result<String> {
    let res = harness::load_forecast_json(input)?;
    let xs: Vec<f64> = (1..=res.horizon).map(|i| i as f64).collect();
    let band = |errs: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(res.horizon);
        let mut hi = Vec::with_capacity(res.horizon);
        for j in 0..res.horizon {
            let mut col: Vec<f64> = errs.iter().map(|e| e[j]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            lo.push(harness::quantile(&col, 0.25));
            hi.push(harness::quantile(&col, 0.75));
        }
        (lo, hi)
    };
    let series = vec![
        Series {
            label: "shred median".into(),
            xs: xs.clone(),
            ys: res.shred_median.clone(),
            band: Some(band(&res.shred_step_errors)),
            dashed: false,
        },
        Series {
            label: "gappy pod median".into(),
            xs: xs.clone(),
            ys: res.pod_median.clone(),
            band: Some(band(&res.pod_step_errors)),
            dashed: false,
        },
        Series {
            label: "ensembled forecast".into(),
            xs,
            ys: res.ensembled_error.clone(),
            band: None,
            dashed: true,
        },
    ];
    render_chart(
        &ChartSpec {
            title: "forecast error by step".into(),
            x_label: "forecast step".into(),
            y_label: "relative error".into(),
            log_y,
        },
        &series,
    )
}
